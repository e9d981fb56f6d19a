#pragma once

// Parametric predictive families. Each maps (theta, history) to a Gaussian
// one-step-ahead predictive. Parameters are always on the natural scale here;
// see transforms.hpp for the unconstrained reparametrization.

#include "optscore/error.hpp"
#include "optscore/predictive.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace optscore {

enum class ModelFamily {
    iid_normal,        // (mean, variance)
    arch1,             // (mean, omega, alpha)
    arch1_fixed_mean,  // (omega, alpha), mean pinned at 0
    garch11,           // (mean, omega, alpha, beta)
    ar1_normal,        // (intercept, slope, variance)
    ma1_normal,        // (intercept, ma coefficient, variance)
};

inline constexpr std::array kAllFamilies = {ModelFamily::iid_normal, ModelFamily::arch1,
                                            ModelFamily::arch1_fixed_mean, ModelFamily::garch11,
                                            ModelFamily::ar1_normal, ModelFamily::ma1_normal};

inline std::string_view family_name(ModelFamily f) noexcept {
    switch (f) {
        case ModelFamily::iid_normal: return "iid_normal";
        case ModelFamily::arch1: return "arch1";
        case ModelFamily::arch1_fixed_mean: return "arch1_fixed_mean";
        case ModelFamily::garch11: return "garch11";
        case ModelFamily::ar1_normal: return "ar1_normal";
        case ModelFamily::ma1_normal: return "ma1_normal";
    }
    return "unknown";
}

inline std::optional<ModelFamily> parse_family(std::string_view name) noexcept {
    for (auto f : kAllFamilies) {
        if (family_name(f) == name) return f;
    }
    return std::nullopt;
}

inline std::size_t parameter_count(ModelFamily f) noexcept {
    switch (f) {
        case ModelFamily::iid_normal: return 2;
        case ModelFamily::arch1_fixed_mean: return 2;
        case ModelFamily::garch11: return 4;
        default: return 3;
    }
}

/// Starting values used when no warm start is available; roughly scaled to the
/// sample so the first simplex lands in a sensible region.
inline std::vector<double> default_initial_parameters(ModelFamily f, std::span<const double> data) {
    double mean = 0.0;
    for (double y : data) mean += y;
    mean /= static_cast<double>(data.empty() ? 1 : data.size());
    double var = 0.0;
    for (double y : data) var += (y - mean) * (y - mean);
    var = data.size() > 1 ? var / static_cast<double>(data.size()) : 1.0;
    if (!(var > 1e-12)) var = 1.0;
    switch (f) {
        case ModelFamily::iid_normal: return {mean, var};
        case ModelFamily::arch1: return {mean, 0.7 * var, 0.3};
        case ModelFamily::arch1_fixed_mean: return {0.7 * var, 0.3};
        case ModelFamily::garch11: return {mean, 0.1 * var, 0.1, 0.8};
        case ModelFamily::ar1_normal: return {mean, 0.0, var};
        case ModelFamily::ma1_normal: return {mean, 0.0, var};
    }
    return {};
}

inline bool in_domain(ModelFamily f, std::span<const double> th) noexcept {
    if (th.size() != parameter_count(f)) return false;
    for (double v : th) {
        if (!std::isfinite(v)) return false;
    }
    switch (f) {
        case ModelFamily::iid_normal: return th[1] > 0.0;
        case ModelFamily::arch1: return th[1] > 0.0 && th[2] >= 0.0 && th[2] < 1.0;
        case ModelFamily::arch1_fixed_mean: return th[0] > 0.0 && th[1] >= 0.0 && th[1] < 1.0;
        case ModelFamily::garch11:
            return th[1] > 0.0 && th[2] >= 0.0 && th[3] >= 0.0 && th[2] + th[3] < 1.0;
        case ModelFamily::ar1_normal:
        case ModelFamily::ma1_normal: return std::abs(th[1]) < 1.0 && th[2] > 0.0;
    }
    return false;
}

inline void check_parameters(ModelFamily f, std::span<const double> th) {
    if (th.size() != parameter_count(f)) {
        throw ShapeError(std::string(family_name(f)) + " expects " +
                         std::to_string(parameter_count(f)) + " parameters, got " +
                         std::to_string(th.size()));
    }
    if (!in_domain(f, th)) {
        throw ParameterDomainError(std::string(family_name(f)) + ": parameters outside the domain");
    }
}

/// Fills out[k] with the predictive moments for history[k+1] given history[0..k].
/// out.size() may equal history.size(), in which case the last entry is the
/// forecast one step beyond the history. No domain checks: callers validate.
inline void predictive_path_unchecked(ModelFamily f, std::span<const double> th,
                                      std::span<const double> history,
                                      std::span<GaussianMoments> out) noexcept {
    const std::size_t n = out.size();
    switch (f) {
        case ModelFamily::iid_normal:
            for (std::size_t k = 0; k < n; ++k) out[k] = {th[0], th[1]};
            break;
        case ModelFamily::arch1:
            for (std::size_t k = 0; k < n; ++k) {
                const double d = history[k] - th[0];
                out[k] = {th[0], th[1] + th[2] * d * d};
            }
            break;
        case ModelFamily::arch1_fixed_mean:
            for (std::size_t k = 0; k < n; ++k) out[k] = {0.0, th[0] + th[1] * history[k] * history[k]};
            break;
        case ModelFamily::garch11: {
            // sigma^2 for history[0] starts at the unconditional variance.
            double var = th[1] / (1.0 - th[2] - th[3]);
            for (std::size_t k = 0; k < n; ++k) {
                const double d = history[k] - th[0];
                var = th[1] + th[2] * d * d + th[3] * var;
                out[k] = {th[0], var};
            }
            break;
        }
        case ModelFamily::ar1_normal:
            for (std::size_t k = 0; k < n; ++k) out[k] = {th[0] + th[1] * history[k], th[2]};
            break;
        case ModelFamily::ma1_normal: {
            // Pre-sample innovation is zero, so eta_0 = y_0 - intercept.
            double eta = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                eta = history[k] - th[0] - th[1] * eta;
                out[k] = {th[0] + th[1] * eta, th[2]};
            }
            break;
        }
    }
}

inline std::vector<GaussianMoments> predictive_path(ModelFamily f, std::span<const double> th,
                                                    std::span<const double> history) {
    check_parameters(f, th);
    if (history.empty()) throw InsufficientHistoryError("predictive_path: empty history");
    std::vector<GaussianMoments> out(history.size());
    predictive_path_unchecked(f, th, history, out);
    return out;
}

/// Predictive law for the observation following `history`.
inline PredictiveLaw one_step_predictive(ModelFamily f, std::span<const double> th,
                                         std::span<const double> history) {
    const auto path = predictive_path(f, th, history);
    return PredictiveLaw(path.back());
}

}  // namespace optscore
