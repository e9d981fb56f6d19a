#pragma once

// Optimal score estimation: Nelder-Mead maximization of average-score criteria
// on the unconstrained scale, for model parameters and for pool weights.

#include "optscore/error.hpp"
#include "optscore/models.hpp"
#include "optscore/predictive.hpp"
#include "optscore/rng.hpp"
#include "optscore/scores.hpp"
#include "optscore/transforms.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace optscore {

struct NelderMeadOptions {
    double initial_step = 0.5;       // simplex edge on the unconstrained scale
    double tolerance = 1e-8;         // stop once the simplex diameter falls below this
    int max_iterations = 2000;
    double bound = 30.0;             // coordinates are projected into [-bound, bound]
    bool record_trace = false;
};

struct NelderMeadResult {
    std::vector<double> argmax;
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> trace;  // best value after each iteration, if requested
};

/// Maximizes `f` with the Nelder-Mead simplex method. Ties between vertices
/// are broken in favour of the one closest to the starting point, so flat
/// criteria stay at `x0`.
inline NelderMeadResult nelder_mead_maximize(const std::function<double(std::span<const double>)>& f,
                                             std::span<const double> x0, const NelderMeadOptions& opt = {}) {
    const std::size_t d = x0.size();
    if (d == 0) throw ShapeError("nelder_mead_maximize: empty parameter vector");
    NelderMeadResult res;

    auto project = [&](std::vector<double>& x) {
        for (auto& v : x) v = std::clamp(v, -opt.bound, opt.bound);
    };
    const std::vector<double> origin = [&] {
        std::vector<double> o(x0.begin(), x0.end());
        project(o);
        return o;
    }();
    auto eval = [&](const std::vector<double>& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    };
    auto dist2 = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += (x[k] - origin[k]) * (x[k] - origin[k]);
        return s;
    };

    struct Vertex {
        std::vector<double> x;
        double value;
        double dist;
    };
    std::vector<Vertex> simplex;
    simplex.reserve(d + 1);
    simplex.push_back({origin, eval(origin), 0.0});
    for (std::size_t k = 0; k < d; ++k) {
        auto x = origin;
        x[k] += (x[k] + opt.initial_step <= opt.bound) ? opt.initial_step : -opt.initial_step;
        simplex.push_back({x, eval(x), dist2(x)});
    }
    auto better = [](const Vertex& a, const Vertex& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.dist < b.dist;
    };
    auto make = [&](std::vector<double> x) {
        project(x);
        const double v = eval(x);
        const double dd = dist2(x);
        return Vertex{std::move(x), v, dd};
    };
    auto diameter = [&] {
        double m = 0.0;
        for (std::size_t i = 1; i <= d; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s = std::max(s, std::abs(simplex[i].x[k] - simplex[0].x[k]));
            m = std::max(m, s);
        }
        return m;
    };

    std::sort(simplex.begin(), simplex.end(), better);
    for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
        if (diameter() < opt.tolerance) {
            res.converged = true;
            break;
        }
        std::vector<double> centroid(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[i].x[k] / static_cast<double>(d);
        }
        auto along = [&](double t) {
            std::vector<double> x(d);
            for (std::size_t k = 0; k < d; ++k) x[k] = centroid[k] + t * (simplex[d].x[k] - centroid[k]);
            return x;
        };
        Vertex& worst = simplex[d];
        Vertex refl = make(along(-1.0));
        if (better(refl, simplex[0])) {
            Vertex exp = make(along(-2.0));
            worst = better(exp, refl) ? std::move(exp) : std::move(refl);
        } else if (better(refl, simplex[d - 1])) {
            worst = std::move(refl);
        } else {
            const bool outside = better(refl, worst);
            Vertex con = make(along(outside ? -0.5 : 0.5));
            if (outside ? !better(refl, con) : better(con, worst)) {
                worst = std::move(con);
            } else {
                for (std::size_t i = 1; i <= d; ++i) {
                    std::vector<double> x(d);
                    for (std::size_t k = 0; k < d; ++k) x[k] = simplex[0].x[k] + 0.5 * (simplex[i].x[k] - simplex[0].x[k]);
                    simplex[i] = make(std::move(x));
                }
            }
        }
        std::sort(simplex.begin(), simplex.end(), better);
        if (opt.record_trace) res.trace.push_back(simplex[0].value);
    }
    if (!res.converged && diameter() < opt.tolerance) res.converged = true;
    res.argmax = simplex[0].x;
    res.value = simplex[0].value;
    return res;
}

struct OptimizerOptions {
    int restarts = 5;                 // cold starts: init plus jittered copies
    double jitter = 0.5;              // sd of the jitter on the unconstrained scale
    double cold_step = 0.5;
    double warm_step = 0.05;
    double local_check_step = 1e-4;   // coordinate probe used to confirm a local maximum
    int max_polish = 5;
    NelderMeadOptions nelder_mead{};
    std::uint64_t seed = 0;
};

struct OptimizationReport {
    std::vector<double> argmax;       // natural scale (parameters or weights)
    std::vector<double> unconstrained;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    int restarts_used = 0;
    bool non_identified = false;      // criterion flat along at least one coordinate at the argmax
    bool clipped = false;
};

namespace detail {

struct SearchOutcome {
    std::vector<double> x;
    double value;
    int iterations;
    bool converged;
    int restarts;
    bool non_identified;
};

/// Multi-start Nelder-Mead followed by a coordinate probe that restarts the
/// search whenever a +-h step still improves the criterion.
inline SearchOutcome search(const std::function<double(std::span<const double>)>& f,
                            const std::vector<double>& u0, bool warm, const OptimizerOptions& opt) {
    const std::size_t d = u0.size();
    Engine rng = make_stream(opt.seed, "optimizer-restarts");
    boost::random::normal_distribution<double> jitter(0.0, opt.jitter);

    SearchOutcome best{u0, -std::numeric_limits<double>::infinity(), 0, false, 0, false};
    double best_dist = std::numeric_limits<double>::infinity();
    const int starts = warm ? 1 : std::max(1, opt.restarts);
    auto distance = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += (x[k] - u0[k]) * (x[k] - u0[k]);
        return s;
    };

    for (int s = 0; s < starts; ++s) {
        std::vector<double> start = u0;
        if (s > 0) {
            for (auto& v : start) v += jitter(rng);
        }
        NelderMeadOptions nm = opt.nelder_mead;
        nm.initial_step = warm ? opt.warm_step : opt.cold_step;
        auto r = nelder_mead_maximize(f, start, nm);
        int iters = r.iterations;
        bool conv = r.converged;

        for (int polish = 0; polish < opt.max_polish; ++polish) {
            std::vector<double> probe = r.argmax;
            double improved = r.value;
            std::vector<double> improved_x;
            for (std::size_t k = 0; k < d; ++k) {
                for (double sign : {-1.0, 1.0}) {
                    probe = r.argmax;
                    probe[k] = std::clamp(probe[k] + sign * opt.local_check_step, -nm.bound, nm.bound);
                    const double v = f(probe);
                    if (std::isfinite(v) && v > improved) {
                        improved = v;
                        improved_x = probe;
                    }
                }
            }
            if (improved_x.empty()) break;
            nm.initial_step = 10.0 * opt.local_check_step;
            auto again = nelder_mead_maximize(f, improved_x, nm);
            iters += again.iterations;
            conv = again.converged;
            if (again.value >= improved) {
                r = std::move(again);
            } else {
                r.argmax = improved_x;
                r.value = improved;
            }
        }

        best.iterations += iters;
        const double dist = distance(r.argmax);
        const bool take = r.value > best.value || (r.value == best.value && dist < best_dist);
        if (take) {
            best.x = r.argmax;
            best.value = r.value;
            best.converged = conv;
            best_dist = dist;
        } else if (r.value == best.value) {
            best.converged = best.converged || conv;
        }
        best.restarts = s + 1;
    }

    for (std::size_t k = 0; k < d && !best.non_identified; ++k) {
        std::vector<double> probe = best.x;
        probe[k] += opt.local_check_step;
        const double up = f(probe);
        probe[k] = best.x[k] - opt.local_check_step;
        const double down = f(probe);
        best.non_identified = (up == best.value && down == best.value);
    }
    return best;
}

inline void raise_if_failed(const SearchOutcome& s, std::vector<double> natural, const std::string& what) {
    if (!s.converged) {
        throw OptimizationFailure(what + ": no restart converged after " + std::to_string(s.iterations) +
                                      " iterations",
                                  std::move(natural), s.value);
    }
    if (!std::isfinite(s.value)) {
        throw OptimizationFailure(what + ": criterion is not finite at the best point", std::move(natural),
                                  s.value);
    }
}

}  // namespace detail

/// Average score S(P_theta^{t-1}, y_t) over t = 1..n-1 of a data window, as a
/// function of unconstrained parameters. Keeps scratch buffers between calls.
class ScoreCriterion {
public:
    ScoreCriterion(ModelFamily family, std::span<const double> data, ScoringRule rule)
        : family_(family), data_(data), rule_(std::move(rule)), theta_(parameter_count(family)),
          moments_(data.size() > 0 ? data.size() - 1 : 0) {
        if (data.size() < 2) throw InsufficientHistoryError("ScoreCriterion needs at least 2 observations");
    }

    double operator()(std::span<const double> u) {
        from_unconstrained_into(family_, u, theta_);
        return at_natural(theta_);
    }

    double at_natural(std::span<const double> theta) {
        predictive_path_unchecked(family_, theta, data_.first(data_.size() - 1), moments_);
        const auto ys = data_.subspan(1);
        return std::visit(
            [&](const auto& r) {
                double sum = 0.0;
                for (std::size_t t = 0; t < ys.size(); ++t) sum += score_gaussian(r, moments_[t], ys[t]);
                return sum / static_cast<double>(ys.size());
            },
            rule_);
    }

    /// Per-observation scores at natural-scale parameters.
    std::vector<double> per_step(std::span<const double> theta) {
        predictive_path_unchecked(family_, theta, data_.first(data_.size() - 1), moments_);
        const auto ys = data_.subspan(1);
        std::vector<double> out(ys.size());
        for (std::size_t t = 0; t < ys.size(); ++t) out[t] = score_gaussian(rule_, moments_[t], ys[t]);
        return out;
    }

private:
    ModelFamily family_;
    std::span<const double> data_;
    ScoringRule rule_;
    std::vector<double> theta_;
    std::vector<GaussianMoments> moments_;
};

/// theta_hat = argmax of the average score over the window. `warm` restricts
/// the search to a single start from `init` with a small simplex.
inline OptimizationReport optimal_score_estimate(ModelFamily family, std::span<const double> data,
                                                 const ScoringRule& rule, std::span<const double> init,
                                                 const OptimizerOptions& opt = {}, bool warm = false) {
    if (data.size() < 30) {
        throw InsufficientHistoryError("optimal_score_estimate needs at least 30 observations, got " +
                                       std::to_string(data.size()));
    }
    check_parameters(family, init);
    const auto u0 = to_unconstrained(family, init);
    ScoreCriterion crit(family, data, rule);
    std::function<double(std::span<const double>)> f = [&](std::span<const double> u) { return crit(u); };
    const auto s = detail::search(f, u0.values, warm, opt);

    OptimizationReport rep;
    rep.unconstrained = s.x;
    const auto nat = from_unconstrained(family, s.x);
    rep.argmax = nat.values;
    rep.clipped = nat.clipped;
    rep.value = s.value;
    rep.iterations = s.iterations;
    rep.converged = s.converged;
    rep.restarts_used = s.restarts;
    rep.non_identified = s.non_identified;
    detail::raise_if_failed(s, rep.argmax, std::string("optimal_score_estimate(") +
                                               std::string(family_name(family)) + ")");
    return rep;
}

/// Component predictives laid out time-major: row t holds the n component
/// Gaussians for observation t.
class ComponentMatrix {
public:
    ComponentMatrix(std::size_t rows, std::size_t components)
        : rows_(rows), cols_(components), data_(rows * components) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t components() const noexcept { return cols_; }
    GaussianMoments& operator()(std::size_t t, std::size_t k) { return data_[t * cols_ + k]; }
    [[nodiscard]] const GaussianMoments& operator()(std::size_t t, std::size_t k) const {
        return data_[t * cols_ + k];
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<GaussianMoments> data_;
};

/// Average score of the pooled predictive sum_k w_k m_k over the rows.
class PoolCriterion {
public:
    PoolCriterion(const ComponentMatrix& preds, std::span<const double> ys, ScoringRule rule)
        : preds_(preds), ys_(ys), rule_(std::move(rule)), w_(preds.components()), mix_(preds.components()) {}

    double operator()(std::span<const double> u) {
        simplex_from_unconstrained_into(u, w_);
        return at_weights(w_);
    }

    double at_weights(std::span<const double> w) {
        const std::size_t n = preds_.components();
        return std::visit(
            [&](const auto& r) {
                double sum = 0.0;
                for (std::size_t t = 0; t < ys_.size(); ++t) {
                    std::size_t m = 0;
                    for (std::size_t k = 0; k < n; ++k) {
                        if (w[k] <= 0.0) continue;
                        const auto& g = preds_(t, k);
                        mix_[m++] = {w[k], g.mean, g.variance};
                    }
                    sum += score_mixture(r, std::span<const MixtureComponent>(mix_.data(), m), ys_[t]);
                }
                return sum / static_cast<double>(ys_.size());
            },
            rule_);
    }

private:
    const ComponentMatrix& preds_;
    std::span<const double> ys_;
    ScoringRule rule_;
    std::vector<double> w_;
    std::vector<MixtureComponent> mix_;
};

/// w_hat = argmax over the simplex of the pooled average score.
inline OptimizationReport optimal_pool_weights(const ComponentMatrix& preds, std::span<const double> ys,
                                               const ScoringRule& rule, std::span<const double> init,
                                               const OptimizerOptions& opt = {}, bool warm = false) {
    if (preds.rows() != ys.size()) {
        throw ShapeError("optimal_pool_weights: " + std::to_string(preds.rows()) + " prediction rows vs " +
                         std::to_string(ys.size()) + " observations");
    }
    if (preds.components() < 2) throw ShapeError("optimal_pool_weights needs at least 2 components");
    if (init.size() != preds.components()) throw ShapeError("optimal_pool_weights: init has wrong length");
    if (ys.empty()) throw ShapeError("optimal_pool_weights: empty window");
    const auto u0 = simplex_to_unconstrained(init);
    PoolCriterion crit(preds, ys, rule);
    std::function<double(std::span<const double>)> f = [&](std::span<const double> u) { return crit(u); };
    const auto s = detail::search(f, u0.values, warm, opt);

    OptimizationReport rep;
    rep.unconstrained = s.x;
    rep.argmax = simplex_from_unconstrained(s.x).values;
    rep.clipped = u0.clipped;
    rep.value = s.value;
    rep.iterations = s.iterations;
    rep.converged = s.converged;
    rep.restarts_used = s.restarts;
    rep.non_identified = s.non_identified;
    detail::raise_if_failed(s, rep.argmax, "optimal_pool_weights");
    return rep;
}

}  // namespace optscore
