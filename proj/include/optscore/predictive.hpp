#pragma once

#include "optscore/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace optscore {

/// Densities and tail masses below this floor are scored as log(kLogFloorValue).
inline constexpr double kLogFloorValue = 1e-300;
inline const double kLogFloor = std::log(kLogFloorValue);

namespace normal {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;
inline constexpr double kInvSqrt2 = 0.7071067811865475244008443621048490392848359376885;
inline constexpr double kInvSqrtPi = 0.5641895835477562869480794515607725858440506293290;
inline constexpr double kHalfLog2Pi = 0.9189385332046727417803297364056176398613974736378;

inline double pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
inline double cdf(double z) noexcept { return 0.5 * std::erfc(-z * kInvSqrt2); }
inline double sf(double z) noexcept { return 0.5 * std::erfc(z * kInvSqrt2); }

inline double quantile(double p) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, p);
}

}  // namespace normal

inline double floored_log(double x) noexcept {
    return x > kLogFloorValue ? std::log(x) : kLogFloor;
}

/// Mean and variance of a Gaussian one-step predictive.
struct GaussianMoments {
    double mean;
    double variance;
};

struct MixtureComponent {
    double weight;
    double mean;
    double variance;
};

inline double mixture_pdf(std::span<const MixtureComponent> cs, double y) noexcept {
    double d = 0.0;
    for (const auto& c : cs) {
        const double s = std::sqrt(c.variance);
        d += c.weight * normal::pdf((y - c.mean) / s) / s;
    }
    return d;
}

inline double mixture_cdf(std::span<const MixtureComponent> cs, double y) noexcept {
    double p = 0.0;
    for (const auto& c : cs) p += c.weight * normal::cdf((y - c.mean) / std::sqrt(c.variance));
    return p;
}

inline double mixture_sf(std::span<const MixtureComponent> cs, double y) noexcept {
    double p = 0.0;
    for (const auto& c : cs) p += c.weight * normal::sf((y - c.mean) / std::sqrt(c.variance));
    return p;
}

/// One-step-ahead predictive law: a finite Gaussian mixture. A single component
/// is a plain Gaussian.
class PredictiveLaw {
public:
    PredictiveLaw(double mean, double variance) : components_{{1.0, mean, variance}} {
        check();
    }

    explicit PredictiveLaw(GaussianMoments m) : PredictiveLaw(m.mean, m.variance) {}

    explicit PredictiveLaw(std::vector<MixtureComponent> components)
        : components_(std::move(components)) {
        check();
    }

    [[nodiscard]] std::span<const MixtureComponent> components() const noexcept {
        return components_;
    }
    [[nodiscard]] bool is_gaussian() const noexcept { return components_.size() == 1; }
    [[nodiscard]] double mean() const noexcept {
        double m = 0.0;
        for (const auto& c : components_) m += c.weight * c.mean;
        return m;
    }

    [[nodiscard]] double pdf(double y) const noexcept;
    [[nodiscard]] double cdf(double y) const noexcept;
    /// 1 - cdf(y), evaluated without cancellation in the upper tail.
    [[nodiscard]] double sf(double y) const noexcept;

private:
    void check() const {
        if (components_.empty()) throw ParameterDomainError("PredictiveLaw needs a component");
        double total = 0.0;
        for (const auto& c : components_) {
            if (!(c.weight >= 0.0) || !std::isfinite(c.mean) || !(c.variance > 0.0) ||
                !std::isfinite(c.variance)) {
                throw ParameterDomainError("PredictiveLaw component needs weight >= 0, finite mean, "
                                           "variance > 0");
            }
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw ParameterDomainError("PredictiveLaw weights sum to " + std::to_string(total));
        }
    }

    std::vector<MixtureComponent> components_;
};

inline double PredictiveLaw::pdf(double y) const noexcept { return mixture_pdf(components_, y); }
inline double PredictiveLaw::cdf(double y) const noexcept { return mixture_cdf(components_, y); }
inline double PredictiveLaw::sf(double y) const noexcept { return mixture_sf(components_, y); }

/// Linear pool: the flattened mixture whose density is sum_k w_k p_k(y).
inline PredictiveLaw pool_predictive(std::span<const PredictiveLaw> laws, std::span<const double> w) {
    if (laws.size() != w.size()) {
        throw ShapeError("pool_predictive: " + std::to_string(laws.size()) + " components but " +
                         std::to_string(w.size()) + " weights");
    }
    if (laws.empty()) throw ShapeError("pool_predictive: no components");
    double total = 0.0;
    for (double wk : w) {
        if (!(wk >= 0.0)) throw ParameterDomainError("pool_predictive: negative weight");
        total += wk;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParameterDomainError("pool_predictive: weights off the simplex");
    std::vector<MixtureComponent> flat;
    for (std::size_t k = 0; k < laws.size(); ++k) {
        if (w[k] == 0.0) continue;
        for (const auto& c : laws[k].components()) flat.push_back({w[k] * c.weight, c.mean, c.variance});
    }
    return PredictiveLaw(std::move(flat));
}

}  // namespace optscore
