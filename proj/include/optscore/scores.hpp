#pragma once

// Positively oriented proper scoring rules (higher is better) with closed forms
// for Gaussian and Gaussian-mixture predictives.

#include "optscore/dgp.hpp"
#include "optscore/error.hpp"
#include "optscore/predictive.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace optscore {

enum class TailSide { lower, upper };

/// Region of interest for the censored likelihood score. Lower regions are
/// (-inf, threshold], upper regions are [threshold, inf).
struct Region {
    TailSide side = TailSide::lower;
    double level = 0.1;
    double threshold = 0.0;

    [[nodiscard]] bool contains(double y) const noexcept {
        return side == TailSide::lower ? y <= threshold : y >= threshold;
    }
};

struct LogScore {};
struct Crps {};
struct CensoredLs {
    Region region;
};

/// Quantile score at `level`; the standard normal quantile is cached.
struct QuantileScore {
    double level = 0.05;
    double z = 0.0;

    QuantileScore() : QuantileScore(0.05) {}
    explicit QuantileScore(double p) : level(p) {
        if (!(p > 0.0 && p < 1.0)) throw ParameterDomainError("quantile score level must lie in (0,1)");
        z = normal::quantile(p);
    }
};

using ScoringRule = std::variant<LogScore, Crps, CensoredLs, QuantileScore>;

// ---------------------------------------------------------------------------
// Rule identifiers as written in configuration files.

enum class RuleKind { ls, crps, cls, qs };

/// Unresolved rule: the CLS threshold is fixed later from an estimation window.
struct RuleId {
    RuleKind kind = RuleKind::ls;
    double level = 0.0;
    TailSide side = TailSide::lower;

    friend bool operator==(const RuleId&, const RuleId&) = default;
};

inline std::string format_level(double level) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", level);
    // Keep levels that need more precision (e.g. 0.025) exact.
    if (std::abs(std::strtod(buf, nullptr) - level) > 1e-12) std::snprintf(buf, sizeof buf, "%.6g", level);
    return buf;
}

inline std::string to_string(const RuleId& r) {
    switch (r.kind) {
        case RuleKind::ls: return "ls";
        case RuleKind::crps: return "crps";
        case RuleKind::cls:
            return "cls@" + format_level(r.level) + (r.side == TailSide::lower ? ":lower" : ":upper");
        case RuleKind::qs: return "qs@" + format_level(r.level);
    }
    return "?";
}

/// Short label in the style of the published tables ("CLS 10%", "QS 5%").
inline std::string display_name(const RuleId& r) {
    char buf[32];
    switch (r.kind) {
        case RuleKind::ls: return "LS";
        case RuleKind::crps: return "CRPS";
        case RuleKind::cls: std::snprintf(buf, sizeof buf, "CLS %g%%", r.level * 100.0); return buf;
        case RuleKind::qs: std::snprintf(buf, sizeof buf, "QS %g%%", r.level * 100.0); return buf;
    }
    return "?";
}

namespace detail {

inline std::optional<double> parse_level(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    if (!(v > 0.0 && v < 1.0)) return std::nullopt;
    return v;
}

}  // namespace detail

/// Parses `ls`, `crps`, `cls@<level>:lower|upper` or `qs@<level>`; levels in (0,1).
inline std::optional<RuleId> parse_rule(std::string_view s) {
    if (s == "ls") return RuleId{RuleKind::ls};
    if (s == "crps") return RuleId{RuleKind::crps};
    if (s.starts_with("qs@")) {
        auto lvl = detail::parse_level(s.substr(3));
        if (!lvl) return std::nullopt;
        return RuleId{RuleKind::qs, *lvl};
    }
    if (s.starts_with("cls@")) {
        const auto rest = s.substr(4);
        const auto colon = rest.find(':');
        if (colon == std::string_view::npos) return std::nullopt;
        auto lvl = detail::parse_level(rest.substr(0, colon));
        const auto side = rest.substr(colon + 1);
        if (!lvl || (side != "lower" && side != "upper")) return std::nullopt;
        return RuleId{RuleKind::cls, *lvl, side == "lower" ? TailSide::lower : TailSide::upper};
    }
    return std::nullopt;
}

inline RuleId rule_or_throw(std::string_view s) {
    auto r = parse_rule(s);
    if (!r) throw ParseError("unknown scoring rule '" + std::string(s) + "'");
    return *r;
}

/// LS, CRPS, CLS 10/20/80/90 in table order.
inline std::vector<RuleId> simulation_rules() {
    return {rule_or_throw("ls"),           rule_or_throw("crps"),         rule_or_throw("cls@0.10:lower"),
            rule_or_throw("cls@0.20:lower"), rule_or_throw("cls@0.80:upper"), rule_or_throw("cls@0.90:upper")};
}

/// LS, QS 5/10, CLS 10/20/80/90 in table order.
inline std::vector<RuleId> empirical_rules() {
    return {rule_or_throw("ls"),           rule_or_throw("qs@0.05"),        rule_or_throw("qs@0.10"),
            rule_or_throw("cls@0.10:lower"), rule_or_throw("cls@0.20:lower"), rule_or_throw("cls@0.80:upper"),
            rule_or_throw("cls@0.90:upper")};
}

// ---------------------------------------------------------------------------
// Empirical quantiles and region resolution.

/// Type-7 (linear interpolation) sample quantile. `sorted` must be ascending.
inline double type7_quantile(std::span<const double> sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Region whose threshold is the type-7 empirical quantile of `sample` at
/// `level`, e.g. upper side at 0.90 gives the region above the 90th percentile.
inline Region resolve_region(std::span<const double> sample, TailSide side, double level) {
    if (sample.size() < 10) {
        throw ShapeError("resolve_region needs at least 10 observations, got " + std::to_string(sample.size()));
    }
    if (!(level > 0.0 && level < 1.0)) throw ParameterDomainError("region level must lie in (0,1)");
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) {
        throw DegenerateSampleError("resolve_region: all observations are equal");
    }
    return Region{side, level, type7_quantile(sorted, level)};
}

/// Turns a rule identifier into a scoring rule, resolving CLS thresholds from
/// `window`.
inline ScoringRule resolve(const RuleId& id, std::span<const double> window) {
    switch (id.kind) {
        case RuleKind::ls: return LogScore{};
        case RuleKind::crps: return Crps{};
        case RuleKind::cls: return CensoredLs{resolve_region(window, id.side, id.level)};
        case RuleKind::qs: return QuantileScore(id.level);
    }
    return LogScore{};
}

inline std::vector<ScoringRule> resolve_all(std::span<const RuleId> ids, std::span<const double> window) {
    std::vector<ScoringRule> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(resolve(id, window));
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian closed forms.

inline double gaussian_log_density(double mean, double var, double y) noexcept {
    const double d = y - mean;
    const double v = -normal::kHalfLog2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
    return v > kLogFloor ? v : kLogFloor;
}

inline double score_gaussian(const LogScore&, GaussianMoments m, double y) noexcept {
    return gaussian_log_density(m.mean, m.variance, y);
}

inline double score_gaussian(const Crps&, GaussianMoments m, double y) noexcept {
    const double s = std::sqrt(m.variance);
    const double z = (y - m.mean) / s;
    return -s * (z * (2.0 * normal::cdf(z) - 1.0) + 2.0 * normal::pdf(z) - normal::kInvSqrtPi);
}

inline double score_gaussian(const CensoredLs& r, GaussianMoments m, double y) noexcept {
    if (r.region.contains(y)) return gaussian_log_density(m.mean, m.variance, y);
    const double z = (r.region.threshold - m.mean) / std::sqrt(m.variance);
    // Complement of a lower region is (threshold, inf); of an upper one (-inf, threshold).
    return floored_log(r.region.side == TailSide::lower ? normal::sf(z) : normal::cdf(z));
}

inline double score_gaussian(const QuantileScore& r, GaussianMoments m, double y) noexcept {
    const double q = m.mean + std::sqrt(m.variance) * r.z;
    return (y - q) * ((y <= q ? 1.0 : 0.0) - r.level);
}

inline double score_gaussian(const ScoringRule& rule, GaussianMoments m, double y) noexcept {
    return std::visit([&](const auto& r) { return score_gaussian(r, m, y); }, rule);
}

// ---------------------------------------------------------------------------
// Mixture forms. These take raw component spans so pooled criteria can score
// candidate weights without building a PredictiveLaw per observation.

namespace detail {

/// E|X| for X ~ N(mu, var).
inline double abs_moment(double mu, double var) noexcept {
    const double s = std::sqrt(var);
    const double z = mu / s;
    return 2.0 * s * normal::pdf(z) + mu * (2.0 * normal::cdf(z) - 1.0);
}

}  // namespace detail

/// Predictive quantile: closed form for a Gaussian, bracketed TOMS 748 root
/// search on the mixture CDF otherwise.
inline double mixture_quantile(std::span<const MixtureComponent> cs, double level, double z) {
    if (cs.size() == 1) return cs[0].mean + std::sqrt(cs[0].variance) * z;
    // The mixture quantile lies between the smallest and largest component quantiles.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : cs) {
        if (c.weight == 0.0) continue;
        const double q = c.mean + std::sqrt(c.variance) * z;
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    if (!(hi > lo)) return lo;
    auto f = [&](double x) { return mixture_cdf(cs, x) - level; };
    const double flo = f(lo);
    const double fhi = f(hi);
    if (flo >= 0.0) return lo;
    if (fhi <= 0.0) return hi;
    constexpr std::uintmax_t kMaxIter = 200;
    std::uintmax_t iters = kMaxIter;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                          boost::math::tools::eps_tolerance<double>(50), iters);
    if (iters >= kMaxIter) {
        throw NumericalError("mixture quantile: root search did not converge in " + std::to_string(kMaxIter) +
                             " iterations (bracket [" + std::to_string(a) + ", " + std::to_string(b) +
                             "], level " + std::to_string(level) + ")");
    }
    return 0.5 * (a + b);
}

inline double predictive_quantile(const PredictiveLaw& p, double level) {
    if (!(level > 0.0 && level < 1.0)) throw ParameterDomainError("quantile level must lie in (0,1)");
    return mixture_quantile(p.components(), level, normal::quantile(level));
}

inline double score_mixture(const LogScore&, std::span<const MixtureComponent> cs, double y) noexcept {
    if (cs.size() == 1) return gaussian_log_density(cs[0].mean, cs[0].variance, y);
    return floored_log(mixture_pdf(cs, y));
}

/// Negated CRPS via E|X-y| - E|X-X'|/2, with pairwise Gaussian terms.
inline double score_mixture(const Crps&, std::span<const MixtureComponent> cs, double y) noexcept {
    if (cs.size() == 1) return score_gaussian(Crps{}, {cs[0].mean, cs[0].variance}, y);
    double first = 0.0;
    double pair = 0.0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        first += cs[i].weight * detail::abs_moment(y - cs[i].mean, cs[i].variance);
        pair += cs[i].weight * cs[i].weight * detail::abs_moment(0.0, 2.0 * cs[i].variance);
        for (std::size_t j = i + 1; j < cs.size(); ++j) {
            pair += 2.0 * cs[i].weight * cs[j].weight *
                    detail::abs_moment(cs[i].mean - cs[j].mean, cs[i].variance + cs[j].variance);
        }
    }
    return -(first - 0.5 * pair);
}

inline double score_mixture(const CensoredLs& r, std::span<const MixtureComponent> cs, double y) noexcept {
    if (cs.size() == 1) return score_gaussian(r, {cs[0].mean, cs[0].variance}, y);
    if (r.region.contains(y)) return floored_log(mixture_pdf(cs, y));
    return floored_log(r.region.side == TailSide::lower ? mixture_sf(cs, r.region.threshold)
                                                        : mixture_cdf(cs, r.region.threshold));
}

inline double score_mixture(const QuantileScore& r, std::span<const MixtureComponent> cs, double y) {
    const double q = mixture_quantile(cs, r.level, r.z);
    return (y - q) * ((y <= q ? 1.0 : 0.0) - r.level);
}

inline double score_mixture(const ScoringRule& rule, std::span<const MixtureComponent> cs, double y) {
    return std::visit([&](const auto& r) { return score_mixture(r, cs, y); }, rule);
}

inline double log_score(const PredictiveLaw& p, double y) noexcept {
    return score_mixture(LogScore{}, p.components(), y);
}

inline double crps(const PredictiveLaw& p, double y) noexcept { return score_mixture(Crps{}, p.components(), y); }

inline double censored_ls(const PredictiveLaw& p, double y, const Region& r) noexcept {
    return score_mixture(CensoredLs{r}, p.components(), y);
}

inline double quantile_score(const PredictiveLaw& p, double y, double level) {
    return score_mixture(QuantileScore(level), p.components(), y);
}

inline double score(const ScoringRule& rule, const PredictiveLaw& p, double y) {
    return score_mixture(rule, p.components(), y);
}

/// Arithmetic mean of per-observation scores.
inline double average_score(std::span<const PredictiveLaw> preds, std::span<const double> ys,
                            const ScoringRule& rule) {
    if (preds.size() != ys.size()) {
        throw ShapeError("average_score: " + std::to_string(preds.size()) + " predictives vs " +
                         std::to_string(ys.size()) + " observations");
    }
    if (ys.empty()) throw ShapeError("average_score: empty sequences");
    double sum = 0.0;
    for (std::size_t t = 0; t < ys.size(); ++t) sum += score(rule, preds[t], ys[t]);
    return sum / static_cast<double>(ys.size());
}

/// True when a score sits on the log floor (density or tail mass underflowed).
inline bool is_floored(double s) noexcept { return s <= kLogFloor; }

}  // namespace optscore
