#pragma once

// Out-of-sample experiment protocols and the score matrices they produce.
// Rows are optimizer rules, columns are evaluation rules.

#include "optscore/dgp.hpp"
#include "optscore/error.hpp"
#include "optscore/models.hpp"
#include "optscore/optimizer.hpp"
#include "optscore/rng.hpp"
#include "optscore/scores.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace optscore {

enum class WindowKind { expanding, rolling };

/// Estimation windows. Step k uses y[start_k, end_k) with end_k = length + k,
/// start_k = 0 (expanding) or k (rolling), and forecasts y[end_k + gap].
struct WindowScheme {
    WindowKind kind = WindowKind::expanding;
    std::size_t gap = 0;
};

struct ExperimentOptions {
    std::size_t refit_every = 1;       // 1 refits at every step
    WindowScheme window{};
    OptimizerOptions optimizer{};
    unsigned threads = 0;              // rows run concurrently; 0 = hardware concurrency
    std::uint64_t seed = 0;            // optimizer restart streams derive from this
    std::optional<std::size_t> tau;    // cap on the number of evaluated steps
};

struct RowDiagnostics {
    std::size_t refits = 0;
    std::size_t fallbacks = 0;         // refits that kept the previous parameters or weights
    std::size_t clipped = 0;           // fits whose argmax touched a boundary clip
    std::size_t non_identified = 0;
};

struct ScoreMatrix {
    std::vector<RuleId> optimizer_rules;
    std::vector<RuleId> evaluation_rules;
    std::vector<std::vector<double>> entries;            // [i][j]
    std::size_t tau = 0;
    std::vector<std::vector<std::size_t>> counts;        // evaluations behind each entry
    std::vector<std::vector<std::size_t>> floored;       // scores that hit the log floor
    std::vector<std::vector<std::vector<double>>> per_step;  // [i][j][t]
    std::vector<RowDiagnostics> diagnostics;

    [[nodiscard]] std::size_t rows() const noexcept { return optimizer_rules.size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return evaluation_rules.size(); }
    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return entries.at(i).at(j); }

    [[nodiscard]] std::optional<std::size_t> row_of(const RuleId& r) const {
        for (std::size_t i = 0; i < optimizer_rules.size(); ++i) {
            if (optimizer_rules[i] == r) return i;
        }
        return std::nullopt;
    }
    [[nodiscard]] std::optional<std::size_t> col_of(const RuleId& r) const {
        for (std::size_t j = 0; j < evaluation_rules.size(); ++j) {
            if (evaluation_rules[j] == r) return j;
        }
        return std::nullopt;
    }

    /// Delta_t = S_j(row a) - S_j(row b) per out-of-sample step.
    [[nodiscard]] std::vector<double> differences(std::size_t j, std::size_t a, std::size_t b) const {
        const auto& x = per_step.at(a).at(j);
        const auto& y = per_step.at(b).at(j);
        std::vector<double> d(x.size());
        for (std::size_t t = 0; t < x.size(); ++t) d[t] = x[t] - y[t];
        return d;
    }
};

namespace detail {

struct RowResult {
    std::vector<std::vector<double>> scores;  // [j][t]
    RowDiagnostics diag;
};

inline std::uint64_t fit_seed(std::uint64_t seed, std::size_t row, std::size_t component, std::size_t step) {
    return splitmix64(splitmix64(splitmix64(seed ^ 0x6f7074ULL) + row) + component) + step;
}

/// One refit with the documented fallbacks: warm start from the previous
/// argmax, then a cold multi-start, then the previous parameters.
inline std::vector<double> refit(ModelFamily family, std::span<const double> window, const ScoringRule& rule,
                                 const std::optional<std::vector<double>>& previous,
                                 const OptimizerOptions& base, std::uint64_t seed, std::size_t step,
                                 RowDiagnostics& diag) {
    OptimizerOptions opt = base;
    opt.seed = seed;
    ++diag.refits;
    auto accept = [&](const OptimizationReport& r) {
        if (r.clipped) ++diag.clipped;
        if (r.non_identified) ++diag.non_identified;
        return r.argmax;
    };
    if (previous) {
        try {
            return accept(optimal_score_estimate(family, window, rule, *previous, opt, true));
        } catch (const OptimizationFailure&) {
        }
        try {
            return accept(optimal_score_estimate(family, window, rule, *previous, opt, false));
        } catch (const OptimizationFailure&) {
            ++diag.fallbacks;
            return *previous;
        }
    }
    try {
        return accept(optimal_score_estimate(family, window, rule,
                                             default_initial_parameters(family, window), opt, false));
    } catch (const OptimizationFailure& e) {
        throw ExperimentError(std::string("initial fit failed: ") + e.what(), step);
    }
}

template <class RowFn>
std::vector<RowResult> run_rows(std::size_t rows, unsigned threads, RowFn fn) {
    std::vector<RowResult> out(rows);
    const unsigned hw = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    if (hw <= 1 || rows <= 1) {
        for (std::size_t i = 0; i < rows; ++i) out[i] = fn(i);
        return out;
    }
    for (std::size_t first = 0; first < rows; first += hw) {
        std::vector<std::future<RowResult>> jobs;
        const std::size_t last = std::min<std::size_t>(rows, first + hw);
        for (std::size_t i = first; i < last; ++i) jobs.push_back(std::async(std::launch::async, fn, i));
        for (std::size_t i = first; i < last; ++i) out[i] = jobs[i - first].get();
    }
    return out;
}

inline ScoreMatrix assemble(std::span<const RuleId> opt_rules, std::span<const RuleId> eval_rules,
                            std::size_t tau, std::vector<RowResult> rows) {
    ScoreMatrix m;
    m.optimizer_rules.assign(opt_rules.begin(), opt_rules.end());
    m.evaluation_rules.assign(eval_rules.begin(), eval_rules.end());
    m.tau = tau;
    for (auto& r : rows) {
        std::vector<double> e;
        std::vector<std::size_t> c;
        std::vector<std::size_t> f;
        for (const auto& s : r.scores) {
            double sum = 0.0;
            std::size_t fl = 0;
            for (double v : s) {
                sum += v;
                if (is_floored(v)) ++fl;
            }
            e.push_back(sum / static_cast<double>(s.size()));
            c.push_back(s.size());
            f.push_back(fl);
        }
        m.entries.push_back(std::move(e));
        m.counts.push_back(std::move(c));
        m.floored.push_back(std::move(f));
        m.per_step.push_back(std::move(r.scores));
        m.diagnostics.push_back(r.diag);
    }
    return m;
}

inline void check_rules(std::span<const RuleId> opt_rules, std::span<const RuleId> eval_rules) {
    if (opt_rules.empty() || eval_rules.empty()) throw ShapeError("experiment needs at least one rule of each kind");
}

}  // namespace detail

/// Single-model protocol: for each optimizer rule, fit on the estimation
/// window, forecast one step, score under every evaluation rule, move the
/// window on by one. Parameters and CLS thresholds are refreshed every
/// `refit_every` steps and held in between. Predictives run the model
/// recursion over the current window start up to the forecast origin.
inline ScoreMatrix single_model_experiment(const ReturnSeries& data, ModelFamily family,
                                           std::span<const RuleId> opt_rules, std::span<const RuleId> eval_rules,
                                           std::size_t est_start, const ExperimentOptions& o = {}) {
    detail::check_rules(opt_rules, eval_rules);
    const auto y = data.values();
    const std::size_t gap = o.window.gap;
    if (o.refit_every == 0) throw ParameterDomainError("refit_every must be >= 1");
    if (y.size() <= est_start + gap) {
        throw InsufficientHistoryError("single_model_experiment: T = " + std::to_string(y.size()) +
                                       " leaves no out-of-sample step after est_start = " +
                                       std::to_string(est_start));
    }
    std::size_t tau = y.size() - est_start - gap;
    if (o.tau) tau = std::min(tau, *o.tau);

    auto row = [&](std::size_t i) {
        detail::RowResult res;
        res.scores.assign(eval_rules.size(), std::vector<double>(tau));
        std::optional<std::vector<double>> theta;
        std::vector<ScoringRule> eval;
        std::vector<GaussianMoments> path;
        for (std::size_t k = 0; k < tau; ++k) {
            const std::size_t start = o.window.kind == WindowKind::rolling ? k : 0;
            const std::size_t end = est_start + k;
            const std::size_t target = end + gap;
            if (k % o.refit_every == 0) {
                const auto window = y.subspan(start, end - start);
                eval = resolve_all(eval_rules, window);
                const auto rule = resolve(opt_rules[i], window);
                theta = detail::refit(family, window, rule, theta, o.optimizer,
                                      detail::fit_seed(o.seed, i, 0, k), k, res.diag);
            }
            path.resize(target - start);
            predictive_path_unchecked(family, *theta, y.subspan(start, target - start), path);
            const auto m = path.back();
            for (std::size_t j = 0; j < eval.size(); ++j) res.scores[j][k] = score_gaussian(eval[j], m, y[target]);
        }
        return res;
    };
    return detail::assemble(opt_rules, eval_rules, tau, detail::run_rows(opt_rules.size(), o.threads, row));
}

/// Simulates T observations from `dgp` and runs the single-model protocol.
inline ScoreMatrix single_model_experiment(const DgpSpec& dgp, ModelFamily family, std::span<const RuleId> opt_rules,
                                           std::span<const RuleId> eval_rules, std::size_t T, std::size_t est_start,
                                           std::uint64_t seed, ExperimentOptions o = {}) {
    if (!(T > est_start)) throw ParameterDomainError("single_model_experiment: need T > est_start");
    const auto data = simulate(dgp, T, seed);
    o.seed = seed;
    return single_model_experiment(data, family, opt_rules, eval_rules, est_start, o);
}

/// Linear-pool protocol. Roll r: component parameters are fit on y[r, r+J)
/// (every `refit_every` rolls), the components' one-step predictives for the
/// next zeta observations feed the weight fit (every roll), and the pooled
/// predictive for y[r+J+zeta] is scored under every evaluation rule.
inline ScoreMatrix pool_experiment(const ReturnSeries& data, std::span<const ModelFamily> families,
                                   std::span<const RuleId> opt_rules, std::span<const RuleId> eval_rules,
                                   std::size_t J, std::size_t zeta, const ExperimentOptions& o = {}) {
    detail::check_rules(opt_rules, eval_rules);
    if (families.empty()) throw ShapeError("pool_experiment needs at least one family");
    if (o.refit_every == 0) throw ParameterDomainError("refit_every must be >= 1");
    if (zeta == 0) throw ParameterDomainError("pool_experiment: zeta must be >= 1");
    const auto y = data.values();
    if (y.size() <= J + zeta) {
        throw InsufficientHistoryError("pool_experiment: T = " + std::to_string(y.size()) +
                                       " must exceed J + zeta = " + std::to_string(J + zeta));
    }
    std::size_t tau = y.size() - J - zeta;
    if (o.tau) tau = std::min(tau, *o.tau);
    const std::size_t n = families.size();

    auto row = [&](std::size_t i) {
        detail::RowResult res;
        res.scores.assign(eval_rules.size(), std::vector<double>(tau));
        std::vector<std::optional<std::vector<double>>> theta(n);
        std::vector<ScoringRule> eval;
        ScoringRule rule;
        std::vector<double> w(n, 1.0 / static_cast<double>(n));
        bool have_weights = false;
        ComponentMatrix preds(zeta, n);
        std::vector<GaussianMoments> path(J + zeta);
        std::vector<GaussianMoments> next(n);
        std::vector<MixtureComponent> mix;
        for (std::size_t r = 0; r < tau; ++r) {
            if (r % o.refit_every == 0) {
                const auto window = y.subspan(r, J);
                eval = resolve_all(eval_rules, window);
                rule = resolve(opt_rules[i], window);
                for (std::size_t k = 0; k < n; ++k) {
                    theta[k] = detail::refit(families[k], window, rule, theta[k], o.optimizer,
                                             detail::fit_seed(o.seed, i, k, r), r, res.diag);
                }
            }
            const auto history = y.subspan(r, J + zeta);
            for (std::size_t k = 0; k < n; ++k) {
                predictive_path_unchecked(families[k], *theta[k], history, path);
                for (std::size_t m = 0; m < zeta; ++m) preds(m, k) = path[J - 1 + m];
                next[k] = path[J + zeta - 1];
            }
            if (n > 1) {
                OptimizerOptions opt = o.optimizer;
                opt.seed = detail::fit_seed(o.seed, i, n, r);
                const auto ys = y.subspan(r + J, zeta);
                ++res.diag.refits;
                bool done = false;
                if (have_weights) {
                    try {
                        w = optimal_pool_weights(preds, ys, rule, w, opt, true).argmax;
                        done = true;
                    } catch (const OptimizationFailure&) {
                    }
                }
                if (!done) {
                    try {
                        const std::vector<double> init = have_weights ? w : std::vector<double>(n, 1.0 / n);
                        w = optimal_pool_weights(preds, ys, rule, init, opt, false).argmax;
                    } catch (const OptimizationFailure& e) {
                        if (!have_weights) throw ExperimentError(std::string("initial weight fit failed: ") + e.what(), r);
                        ++res.diag.fallbacks;
                    }
                }
                have_weights = true;
            }
            mix.clear();
            for (std::size_t k = 0; k < n; ++k) {
                if (w[k] > 0.0) mix.push_back({w[k], next[k].mean, next[k].variance});
            }
            const double target = y[r + J + zeta];
            for (std::size_t j = 0; j < eval.size(); ++j) res.scores[j][r] = score_mixture(eval[j], mix, target);
        }
        return res;
    };
    return detail::assemble(opt_rules, eval_rules, tau, detail::run_rows(opt_rules.size(), o.threads, row));
}

inline ScoreMatrix pool_experiment(const DgpSpec& dgp, std::span<const ModelFamily> families,
                                   std::span<const RuleId> opt_rules, std::span<const RuleId> eval_rules,
                                   std::size_t J, std::size_t zeta, std::size_t T, std::uint64_t seed,
                                   ExperimentOptions o = {}) {
    if (!(T > J + zeta)) throw ParameterDomainError("pool_experiment: need T > J + zeta");
    const auto data = simulate(dgp, T, seed);
    o.seed = seed;
    return pool_experiment(data, families, opt_rules, eval_rules, J, zeta, o);
}

// ---------------------------------------------------------------------------
// Coherence verdicts.

struct ColumnVerdict {
    RuleId rule;
    bool is_max_on_diagonal = false;   // diagonal >= every other entry in the column
    bool strict = false;               // diagonal > every other entry
    double margin = 0.0;               // diagonal - max off-diagonal
};

struct CoherenceVerdict {
    std::vector<ColumnVerdict> columns;

    [[nodiscard]] std::size_t diagonal_max_count() const noexcept {
        return static_cast<std::size_t>(std::count_if(columns.begin(), columns.end(),
                                                      [](const auto& c) { return c.is_max_on_diagonal; }));
    }
    [[nodiscard]] std::size_t strict_count() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(columns.begin(), columns.end(), [](const auto& c) { return c.strict; }));
    }
};

inline CoherenceVerdict coherence_verdict(const ScoreMatrix& m) {
    CoherenceVerdict v;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        const auto d = m.row_of(m.evaluation_rules[j]);
        if (!d) {
            throw ShapeError("coherence_verdict: evaluation rule " + to_string(m.evaluation_rules[j]) +
                             " has no optimizer row");
        }
        double best_other = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m.rows(); ++i) {
            if (i != *d) best_other = std::max(best_other, m.at(i, j));
        }
        ColumnVerdict c;
        c.rule = m.evaluation_rules[j];
        c.margin = m.rows() > 1 ? m.at(*d, j) - best_other : 0.0;
        c.is_max_on_diagonal = c.margin >= 0.0;
        c.strict = m.rows() > 1 && c.margin > 0.0;
        v.columns.push_back(c);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Tables.

enum class TableFormat { markdown, text, csv };

struct Highlight {
    bool best = true;
    bool second = true;
};

/// 3-decimal rounding with ties to even (on the scaled binary value).
inline double round3(double v) noexcept { return std::nearbyint(v * 1000.0) / 1000.0; }

inline std::string format_fixed3(double v) {
    char buf[64];
    const double r = round3(v);
    std::snprintf(buf, sizeof buf, "%.3f", r == 0.0 ? 0.0 : r);
    return buf;
}

/// Renders the matrix. Markdown marks the column best in bold and the second
/// best in italics; text uses a trailing `*` and `+`. Marks are assigned on
/// the rounded values, so displayed ties are all marked. CSV carries full
/// precision and no marks.
inline std::string render_table(const ScoreMatrix& m, TableFormat fmt = TableFormat::markdown, Highlight h = {}) {
    std::ostringstream os;
    if (fmt == TableFormat::csv) {
        os << "optimizer";
        for (const auto& r : m.evaluation_rules) os << ',' << to_string(r);
        os << '\n';
        for (std::size_t i = 0; i < m.rows(); ++i) {
            os << to_string(m.optimizer_rules[i]);
            for (std::size_t j = 0; j < m.cols(); ++j) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", m.at(i, j));
                os << ',' << buf;
            }
            os << '\n';
        }
        return os.str();
    }

    std::vector<double> best(m.cols(), -std::numeric_limits<double>::infinity());
    std::vector<double> second(m.cols(), -std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < m.cols(); ++j) {
        for (std::size_t i = 0; i < m.rows(); ++i) best[j] = std::max(best[j], round3(m.at(i, j)));
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double r = round3(m.at(i, j));
            if (r < best[j]) second[j] = std::max(second[j], r);
        }
    }
    auto cell = [&](std::size_t i, std::size_t j) {
        const double r = round3(m.at(i, j));
        std::string s = format_fixed3(m.at(i, j));
        const bool b = h.best && r == best[j];
        const bool sec = h.second && !b && r == second[j];
        if (fmt == TableFormat::markdown) {
            if (b) return "**" + s + "**";
            if (sec) return "*" + s + "*";
            return s;
        }
        return s + (b ? "*" : sec ? "+" : " ");
    };

    std::vector<std::string> header{"Optimizer"};
    for (const auto& r : m.evaluation_rules) header.push_back(display_name(r));
    std::vector<std::vector<std::string>> body;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::vector<std::string> line{display_name(m.optimizer_rules[i])};
        for (std::size_t j = 0; j < m.cols(); ++j) line.push_back(cell(i, j));
        body.push_back(std::move(line));
    }

    if (fmt == TableFormat::markdown) {
        auto emit = [&](const std::vector<std::string>& cells) {
            os << '|';
            for (const auto& c : cells) os << ' ' << c << " |";
            os << '\n';
        };
        emit(header);
        os << '|';
        for (std::size_t c = 0; c < header.size(); ++c) os << (c == 0 ? " --- |" : " ---: |");
        os << '\n';
        for (const auto& line : body) emit(line);
        return os.str();
    }

    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& line : body) width[c] = std::max(width[c], line[c].size());
    }
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string pad(width[c] - cells[c].size(), ' ');
            os << (c == 0 ? cells[c] + pad : pad + cells[c]) << (c + 1 < cells.size() ? "  " : "");
        }
        os << '\n';
    };
    emit(header);
    for (const auto& line : body) emit(line);
    if (h.best || h.second) os << "(* column best, + second best)\n";
    return os.str();
}

inline std::string render_verdict_csv(const CoherenceVerdict& v) {
    std::ostringstream os;
    os << "evaluation_rule,diagonal_is_max,strict,margin\n";
    for (const auto& c : v.columns) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", c.margin);
        os << to_string(c.rule) << ',' << (c.is_max_on_diagonal ? 1 : 0) << ',' << (c.strict ? 1 : 0) << ','
           << buf << '\n';
    }
    return os.str();
}

}  // namespace optscore
