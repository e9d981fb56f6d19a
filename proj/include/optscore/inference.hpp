#pragma once

// Sampling-distribution tools: sandwich covariance of optimal score
// estimators, simulated score densities, the GW statistic and tau* curves.

#include "optscore/error.hpp"
#include "optscore/models.hpp"
#include "optscore/optimizer.hpp"
#include "optscore/rng.hpp"
#include "optscore/scores.hpp"
#include "optscore/transforms.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace optscore {

struct SandwichCovariance {
    Eigen::MatrixXd H;          // Hessian of the mean criterion
    Eigen::MatrixXd J;          // Newey-West long-run variance of the per-t gradients
    Eigen::MatrixXd V;          // H^-1 J H^-1, symmetrized
    std::size_t d = 0;
    std::size_t n = 0;          // number of per-t terms
    std::size_t lag = 0;
    bool pseudo_inverse = false;  // H was near singular
    double j_min_eigenvalue = 0.0;
};

/// Per-observation score vector as a function of the (unconstrained) parameters.
using PerStepScores = std::function<std::vector<double>(std::span<const double>)>;

namespace detail {

inline double fd_step(double u) noexcept { return 1e-5 * (1.0 + std::abs(u)); }

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Bartlett-kernel long-run variance of the rows of g (n x d), demeaned.
inline Eigen::MatrixXd newey_west(const Eigen::MatrixXd& g, std::size_t lag) {
    const auto n = static_cast<double>(g.rows());
    const Eigen::MatrixXd c = g.rowwise() - g.colwise().mean();
    Eigen::MatrixXd S = c.transpose() * c / n;
    for (std::size_t l = 1; l <= lag && l < static_cast<std::size_t>(g.rows()); ++l) {
        const auto m = static_cast<Eigen::Index>(g.rows() - static_cast<Eigen::Index>(l));
        const Eigen::MatrixXd G = c.bottomRows(m).transpose() * c.topRows(m) / n;
        const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lag + 1);
        S += w * (G + G.transpose());
    }
    return S;
}

/// Sandwich covariance at u_hat for a generic per-t score function.
/// Derivatives are central differences with step 1e-5 (1 + |u_k|).
inline SandwichCovariance sandwich_covariance(const PerStepScores& scores, std::span<const double> u_hat,
                                              std::optional<std::size_t> lag = std::nullopt) {
    const std::size_t d = u_hat.size();
    if (d == 0) throw ShapeError("sandwich_covariance: empty parameter vector");
    std::vector<double> u(u_hat.begin(), u_hat.end());
    const auto base = scores(u);
    const std::size_t n = base.size();
    if (n < 2) throw InsufficientHistoryError("sandwich_covariance needs at least 2 score terms");

    Eigen::MatrixXd g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::vector<double> h(d);
    std::vector<double> plus_mean(d);
    std::vector<double> minus_mean(d);
    for (std::size_t k = 0; k < d; ++k) {
        h[k] = detail::fd_step(u[k]);
        auto up = u;
        up[k] += h[k];
        auto dn = u;
        dn[k] -= h[k];
        const auto sp = scores(up);
        const auto sm = scores(dn);
        if (sp.size() != n || sm.size() != n) throw ShapeError("sandwich_covariance: score length changed");
        for (std::size_t t = 0; t < n; ++t) {
            const double v = (sp[t] - sm[t]) / (2.0 * h[k]);
            if (!std::isfinite(v)) {
                throw BoundaryError("sandwich_covariance: non-finite score difference in coordinate " +
                                    std::to_string(k));
            }
            g(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = v;
        }
        plus_mean[k] = detail::mean_of(sp);
        minus_mean[k] = detail::mean_of(sm);
    }

    const double f0 = detail::mean_of(base);
    Eigen::MatrixXd H(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        H(kk, kk) = (plus_mean[k] - 2.0 * f0 + minus_mean[k]) / (h[k] * h[k]);
        for (std::size_t l = 0; l < k; ++l) {
            auto at = [&](double sk, double sl) {
                auto x = u;
                x[k] += sk * h[k];
                x[l] += sl * h[l];
                return detail::mean_of(scores(x));
            };
            const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[k] * h[l]);
            const auto ll = static_cast<Eigen::Index>(l);
            H(kk, ll) = v;
            H(ll, kk) = v;
        }
    }
    if (!H.allFinite()) throw BoundaryError("sandwich_covariance: non-finite Hessian");

    SandwichCovariance out;
    out.d = d;
    out.n = n;
    out.lag = lag.value_or(static_cast<std::size_t>(std::floor(std::cbrt(static_cast<double>(n)))));
    out.H = H;
    out.J = newey_west(g, out.lag);
    out.J = 0.5 * (out.J + out.J.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> je(out.J, Eigen::EigenvaluesOnly);
    out.j_min_eigenvalue = je.eigenvalues().minCoeff();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> he(0.5 * (H + H.transpose()));
    const Eigen::VectorXd lam = he.eigenvalues();
    const double scale = lam.cwiseAbs().maxCoeff();
    Eigen::VectorXd inv(lam.size());
    for (Eigen::Index k = 0; k < lam.size(); ++k) {
        if (std::abs(lam(k)) <= 1e-10 * scale || scale == 0.0) {
            inv(k) = 0.0;
            out.pseudo_inverse = true;
        } else {
            inv(k) = 1.0 / lam(k);
        }
    }
    const Eigen::MatrixXd Hinv = he.eigenvectors() * inv.asDiagonal() * he.eigenvectors().transpose();
    const Eigen::MatrixXd V = Hinv * out.J * Hinv;
    out.V = 0.5 * (V + V.transpose());
    if (!out.V.allFinite()) throw CovarianceError("sandwich_covariance: non-finite V");
    return out;
}

/// Sandwich covariance of a family's optimal score estimator, on the
/// unconstrained scale of transforms.hpp.
inline SandwichCovariance sandwich_covariance(ModelFamily family, std::span<const double> theta_hat,
                                              std::span<const double> data, const ScoringRule& rule,
                                              std::optional<std::size_t> lag = std::nullopt) {
    check_parameters(family, theta_hat);
    const auto u = to_unconstrained(family, theta_hat);
    if (u.clipped) throw BoundaryError("sandwich_covariance: theta_hat sits on the domain boundary");
    ScoreCriterion crit(family, data, rule);
    std::vector<double> theta(theta_hat.size());
    PerStepScores f = [&](std::span<const double> x) {
        from_unconstrained_into(family, x, theta);
        return crit.per_step(theta);
    };
    return sandwich_covariance(f, u.values, lag);
}

/// Jacobian d theta / d u at u (central differences), for mapping V to the
/// natural scale: V_theta = D V D'.
inline Eigen::MatrixXd natural_jacobian(ModelFamily family, std::span<const double> u) {
    const std::size_t d = u.size();
    Eigen::MatrixXd D(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    std::vector<double> x(u.begin(), u.end());
    std::vector<double> a(d);
    std::vector<double> b(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double h = detail::fd_step(u[k]);
        x[k] = u[k] + h;
        from_unconstrained_into(family, x, a);
        x[k] = u[k] - h;
        from_unconstrained_into(family, x, b);
        x[k] = u[k];
        for (std::size_t r = 0; r < d; ++r) {
            D(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = (a[r] - b[r]) / (2.0 * h);
        }
    }
    return D;
}

// ---------------------------------------------------------------------------
// Score densities.

struct ScoreDensitySample {
    RuleId optimizer_rule;
    RuleId evaluation_rule;
    std::vector<double> draws;
};

struct ScoreDensityResult {
    std::vector<ScoreDensitySample> samples;  // optimizer-major, then evaluation rule
    std::size_t clipped_draws = 0;
};

/// For each optimizer rule i draws u_m ~ N(u_hat_i, V_i / n), maps them to the
/// natural scale and records the in-sample average score of every evaluation
/// rule at the drawn parameters. `theta_hat` is natural scale, `V` the
/// unconstrained-scale sandwich matrices.
inline ScoreDensityResult score_density_simulation(ModelFamily family, std::span<const RuleId> optimizer_rules,
                                                   std::span<const std::vector<double>> theta_hat,
                                                   std::span<const Eigen::MatrixXd> V, std::span<const double> data,
                                                   std::span<const RuleId> evaluation_rules, std::size_t M,
                                                   std::uint64_t seed) {
    if (theta_hat.size() != optimizer_rules.size() || V.size() != optimizer_rules.size()) {
        throw ShapeError("score_density_simulation: one theta_hat and V per optimizer rule required");
    }
    if (M == 0) throw ParameterDomainError("score_density_simulation: M must be >= 1");
    const auto eval = resolve_all(evaluation_rules, data);
    std::vector<ScoreCriterion> crits;
    for (const auto& r : eval) crits.emplace_back(family, data, r);
    const double n = static_cast<double>(data.size() - 1);
    const std::size_t d = parameter_count(family);

    ScoreDensityResult out;
    for (std::size_t i = 0; i < optimizer_rules.size(); ++i) {
        const auto u0 = to_unconstrained(family, theta_hat[i]).values;
        if (V[i].rows() != static_cast<Eigen::Index>(d) || V[i].cols() != static_cast<Eigen::Index>(d)) {
            throw ShapeError("score_density_simulation: V has the wrong dimension");
        }
        const Eigen::MatrixXd C = 0.5 * (V[i] + V[i].transpose()) / n;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
        if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) {
            throw CovarianceError("score_density_simulation: covariance eigen-decomposition failed");
        }
        const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        const Eigen::MatrixXd L = es.eigenvectors() * root.asDiagonal();

        Engine rng = make_stream(seed, "density-draws", i);
        boost::random::normal_distribution<double> z01;
        std::vector<ScoreDensitySample> rows(eval.size());
        for (std::size_t j = 0; j < eval.size(); ++j) {
            rows[j].optimizer_rule = optimizer_rules[i];
            rows[j].evaluation_rule = evaluation_rules[j];
            rows[j].draws.reserve(M);
        }
        Eigen::VectorXd z(static_cast<Eigen::Index>(d));
        std::vector<double> u(d);
        std::vector<double> theta(d);
        for (std::size_t m = 0; m < M; ++m) {
            for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = z01(rng);
            const Eigen::VectorXd step = L * z;
            for (std::size_t k = 0; k < d; ++k) u[k] = u0[k] + step(static_cast<Eigen::Index>(k));
            if (from_unconstrained_into(family, u, theta)) ++out.clipped_draws;
            for (std::size_t j = 0; j < eval.size(); ++j) rows[j].draws.push_back(crits[j].at_natural(theta));
        }
        for (auto& r : rows) out.samples.push_back(std::move(r));
    }
    return out;
}

struct DensityPoint {
    double x;
    double density;
};

/// Gaussian-kernel density estimate with Silverman's rule-of-thumb bandwidth.
inline std::vector<DensityPoint> kernel_density(std::span<const double> sample, std::size_t grid = 200) {
    if (sample.empty()) throw ShapeError("kernel_density: empty sample");
    if (grid < 2) throw ParameterDomainError("kernel_density: grid needs at least 2 points");
    std::vector<double> s(sample.begin(), sample.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    const double sd = s.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    const double iqr = s.size() > 1 ? type7_quantile(s, 0.75) - type7_quantile(s, 0.25) : 0.0;
    double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    double bw = 0.9 * spread * std::pow(n, -0.2);
    if (!(bw > 0.0)) bw = 1e-3 * std::max(1.0, std::abs(mean));
    const double lo = s.front() - 3.0 * bw;
    const double hi = s.back() + 3.0 * bw;
    std::vector<DensityPoint> out(grid);
    for (std::size_t g = 0; g < grid; ++g) {
        const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1);
        double f = 0.0;
        for (double v : s) f += normal::pdf((x - v) / bw);
        out[g] = {x, f / (n * bw)};
    }
    return out;
}

inline std::string render_density_csv(const ScoreDensityResult& r, std::size_t grid = 200) {
    std::ostringstream os;
    os << "rule_i,rule_j,s,density\n";
    char buf[96];
    for (const auto& smp : r.samples) {
        for (const auto& p : kernel_density(smp.draws, grid)) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.x, p.density);
            os << to_string(smp.optimizer_rule) << ',' << to_string(smp.evaluation_rule) << ',' << buf << '\n';
        }
    }
    return os.str();
}

inline std::string render_draws_csv(const ScoreDensityResult& r) {
    std::ostringstream os;
    os << "rule_i,rule_j,draw,s\n";
    char buf[40];
    for (const auto& smp : r.samples) {
        for (std::size_t m = 0; m < smp.draws.size(); ++m) {
            std::snprintf(buf, sizeof buf, "%.17g", smp.draws[m]);
            os << to_string(smp.optimizer_rule) << ',' << to_string(smp.evaluation_rule) << ',' << m << ',' << buf
               << '\n';
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Equal predictive ability.

enum class GwVariance { sample, newey_west };

struct GwResult {
    double z = 0.0;
    double p_value = 1.0;
    double mean = 0.0;
    double variance = 0.0;
    std::size_t tau = 0;
};

inline double chi2_1_quantile(double prob) {
    static const boost::math::chi_squared_distribution<double> chi2(1.0);
    return boost::math::quantile(chi2, prob);
}

inline double chi2_1_upper_tail(double z) {
    static const boost::math::chi_squared_distribution<double> chi2(1.0);
    return z <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(chi2, z));
}

/// Z = tau * mean(Delta)^2 / var(Delta), p-value from the chi^2(1) upper tail.
/// The default variance is the sample variance (divisor tau - 1).
inline GwResult gw_statistic(std::span<const double> delta, GwVariance kind = GwVariance::sample) {
    if (delta.size() < 2) throw InsufficientHistoryError("gw_statistic needs at least 2 differences");
    GwResult r;
    r.tau = delta.size();
    const double n = static_cast<double>(delta.size());
    for (double v : delta) r.mean += v;
    r.mean /= n;
    if (kind == GwVariance::sample) {
        double ss = 0.0;
        for (double v : delta) ss += (v - r.mean) * (v - r.mean);
        r.variance = ss / (n - 1.0);
    } else {
        Eigen::MatrixXd g(static_cast<Eigen::Index>(delta.size()), 1);
        for (std::size_t t = 0; t < delta.size(); ++t) g(static_cast<Eigen::Index>(t), 0) = delta[t];
        r.variance = newey_west(g, static_cast<std::size_t>(std::floor(std::cbrt(n))))(0, 0);
    }
    // Summation leaves residuals of order eps on a constant sequence.
    const bool constant = std::adjacent_find(delta.begin(), delta.end(), std::not_equal_to<>()) == delta.end();
    if (constant) r.variance = 0.0;
    if (r.variance <= 0.0) {
        if (r.mean == 0.0) return r;
        throw DegenerateSampleError("gw_statistic: zero variance with non-zero mean difference");
    }
    r.z = n * r.mean * r.mean / r.variance;
    r.p_value = chi2_1_upper_tail(r.z);
    return r;
}

enum class TauStarClamp { none, negative_mean, exceeds_tau, zero_variance, below_one };

struct TauStarPoint {
    std::size_t tau;
    double tau_star;
    TauStarClamp clamp;
};

struct TauStarCurve {
    RuleId evaluation_rule;     // j
    RuleId optimizer_rule;      // i, compared against the j-optimal forecast
    double alpha = 0.05;
    std::vector<TauStarPoint> points;

    [[nodiscard]] bool ever_unclamped() const noexcept {
        return std::any_of(points.begin(), points.end(), [](const auto& p) { return p.clamp == TauStarClamp::none; });
    }
    [[nodiscard]] double final_value() const { return points.back().tau_star; }
};

/// tau* = chi2_{1}(1-alpha) var_tau / mean_tau^2 over each prefix, with
/// tau* = tau when the mean is negative, when tau* exceeds tau, or when the
/// prefix variance is zero; values below 1 are raised to 1.
inline TauStarCurve tau_star_curve(std::span<const double> delta, double alpha = 0.05) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterDomainError("tau_star_curve: alpha must lie in (0,1)");
    if (delta.empty()) throw ShapeError("tau_star_curve: empty difference sequence");
    TauStarCurve c;
    c.alpha = alpha;
    const double crit = chi2_1_quantile(1.0 - alpha);
    c.points.reserve(delta.size());
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t k = 0; k < delta.size(); ++k) {
        const double n = static_cast<double>(k + 1);
        const double dlt = delta[k] - mean;
        mean += dlt / n;
        m2 += dlt * (delta[k] - mean);
        const double var = k > 0 ? m2 / (n - 1.0) : 0.0;
        TauStarPoint p{k + 1, n, TauStarClamp::none};
        if (!(var > 0.0)) {
            p.clamp = TauStarClamp::zero_variance;
        } else if (mean < 0.0) {
            p.clamp = TauStarClamp::negative_mean;
        } else {
            const double ts = mean == 0.0 ? std::numeric_limits<double>::infinity() : crit * var / (mean * mean);
            if (ts > n) {
                p.clamp = TauStarClamp::exceeds_tau;
            } else if (ts < 1.0) {
                p.tau_star = 1.0;
                p.clamp = TauStarClamp::below_one;
            } else {
                p.tau_star = ts;
            }
        }
        c.points.push_back(p);
    }
    return c;
}

inline std::string render_tau_star_csv(const TauStarCurve& c) {
    std::ostringstream os;
    os << "tau,tau_star,clamped_flag\n";
    char buf[40];
    for (const auto& p : c.points) {
        std::snprintf(buf, sizeof buf, "%.17g", p.tau_star);
        os << p.tau << ',' << buf << ',' << (p.clamp == TauStarClamp::none ? 0 : 1) << '\n';
    }
    return os.str();
}

}  // namespace optscore
