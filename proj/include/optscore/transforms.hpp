#pragma once

// Bijections between natural-scale parameters and R^d. Positives use log,
// unit-interval parameters use the logit, |x| < 1 uses atanh, and the GARCH
// pair (alpha, beta) with alpha + beta < 1 and the weight simplex use a
// softmax with one pivot coordinate.

#include "optscore/error.hpp"
#include "optscore/models.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace optscore {

/// Natural-scale values are clipped this far inside open boundaries.
inline constexpr double kBoundaryClip = 1e-8;

struct Transformed {
    std::vector<double> values;
    bool clipped = false;  // an input or output sat on a boundary and was moved inside
};

namespace detail {

inline double logistic(double u) noexcept {
    return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

inline double clip_open(double x, double lo, double hi, bool& clipped) noexcept {
    if (x < lo + kBoundaryClip) {
        clipped = true;
        return lo + kBoundaryClip;
    }
    if (x > hi - kBoundaryClip) {
        clipped = true;
        return hi - kBoundaryClip;
    }
    return x;
}

inline double positive_to_u(double x, bool& clipped) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ParameterDomainError("positive parameter must be > 0");
    if (x < kBoundaryClip) {
        clipped = true;
        x = kBoundaryClip;
    }
    return std::log(x);
}

/// (a, b) with a, b >= 0, a + b < 1  <->  (log(a/c), log(b/c)), c = 1 - a - b.
inline void pair_to_u(double a, double b, double* u, bool& clipped) {
    if (!(a >= 0.0) || !(b >= 0.0) || !(a + b <= 1.0)) {
        throw ParameterDomainError("need a, b >= 0 and a + b < 1");
    }
    if (a < kBoundaryClip) { a = kBoundaryClip; clipped = true; }
    if (b < kBoundaryClip) { b = kBoundaryClip; clipped = true; }
    double c = 1.0 - a - b;
    if (c < kBoundaryClip) {
        const double scale = (1.0 - kBoundaryClip) / (a + b);
        a *= scale;
        b *= scale;
        c = kBoundaryClip;
        clipped = true;
    }
    u[0] = std::log(a / c);
    u[1] = std::log(b / c);
}

inline void pair_from_u(double u0, double u1, double* out, bool& clipped) noexcept {
    const double m = std::max({0.0, u0, u1});
    const double e0 = std::exp(u0 - m);
    const double e1 = std::exp(u1 - m);
    const double ec = std::exp(-m);
    const double denom = e0 + e1 + ec;
    double a = e0 / denom;
    double b = e1 / denom;
    if (a < kBoundaryClip) { a = kBoundaryClip; clipped = true; }
    if (b < kBoundaryClip) { b = kBoundaryClip; clipped = true; }
    if (1.0 - a - b < kBoundaryClip) {
        const double scale = (1.0 - kBoundaryClip) / (a + b);
        a *= scale;
        b *= scale;
        clipped = true;
    }
    out[0] = a;
    out[1] = b;
}

}  // namespace detail

inline Transformed to_unconstrained(ModelFamily f, std::span<const double> th) {
    if (th.size() != parameter_count(f)) throw ShapeError("to_unconstrained: wrong parameter count");
    for (double v : th) {
        if (!std::isfinite(v)) throw ParameterDomainError("to_unconstrained: non-finite parameter");
    }
    Transformed r;
    r.values.resize(th.size());
    auto& u = r.values;
    bool& c = r.clipped;
    auto logit = [&](double x) {
        if (!(x >= 0.0 && x <= 1.0)) throw ParameterDomainError("parameter must lie in [0,1)");
        x = detail::clip_open(x, 0.0, 1.0, c);
        return std::log(x / (1.0 - x));
    };
    auto fisher = [&](double x) {
        if (!(std::abs(x) <= 1.0)) throw ParameterDomainError("parameter must satisfy |x| < 1");
        return std::atanh(detail::clip_open(x, -1.0, 1.0, c));
    };
    switch (f) {
        case ModelFamily::iid_normal:
            u[0] = th[0];
            u[1] = detail::positive_to_u(th[1], c);
            break;
        case ModelFamily::arch1:
            u[0] = th[0];
            u[1] = detail::positive_to_u(th[1], c);
            u[2] = logit(th[2]);
            break;
        case ModelFamily::arch1_fixed_mean:
            u[0] = detail::positive_to_u(th[0], c);
            u[1] = logit(th[1]);
            break;
        case ModelFamily::garch11:
            u[0] = th[0];
            u[1] = detail::positive_to_u(th[1], c);
            detail::pair_to_u(th[2], th[3], &u[2], c);
            break;
        case ModelFamily::ar1_normal:
        case ModelFamily::ma1_normal:
            u[0] = th[0];
            u[1] = fisher(th[1]);
            u[2] = detail::positive_to_u(th[2], c);
            break;
    }
    return r;
}

/// Writes natural-scale values into `out`; returns true if any value was clipped.
inline bool from_unconstrained_into(ModelFamily f, std::span<const double> u, std::span<double> out) noexcept {
    bool c = false;
    auto unit = [&](double x) { return detail::clip_open(detail::logistic(x), 0.0, 1.0, c); };
    auto positive = [&](double x) {
        double v = std::exp(x);
        if (!(v >= kBoundaryClip * kBoundaryClip)) { v = kBoundaryClip * kBoundaryClip; c = true; }
        if (!std::isfinite(v)) { v = 1e300; c = true; }
        return v;
    };
    switch (f) {
        case ModelFamily::iid_normal:
            out[0] = u[0];
            out[1] = positive(u[1]);
            break;
        case ModelFamily::arch1:
            out[0] = u[0];
            out[1] = positive(u[1]);
            out[2] = unit(u[2]);
            break;
        case ModelFamily::arch1_fixed_mean:
            out[0] = positive(u[0]);
            out[1] = unit(u[1]);
            break;
        case ModelFamily::garch11:
            out[0] = u[0];
            out[1] = positive(u[1]);
            detail::pair_from_u(u[2], u[3], &out[2], c);
            break;
        case ModelFamily::ar1_normal:
        case ModelFamily::ma1_normal:
            out[0] = u[0];
            out[1] = detail::clip_open(std::tanh(u[1]), -1.0, 1.0, c);
            out[2] = positive(u[2]);
            break;
    }
    return c;
}

inline Transformed from_unconstrained(ModelFamily f, std::span<const double> u) {
    if (u.size() != parameter_count(f)) throw ShapeError("from_unconstrained: wrong parameter count");
    Transformed r;
    r.values.resize(u.size());
    r.clipped = from_unconstrained_into(f, u, r.values);
    return r;
}

// ---------------------------------------------------------------------------
// Weight simplex, last coordinate as pivot: u_k = log(w_k / w_n).

inline Transformed simplex_to_unconstrained(std::span<const double> w) {
    if (w.size() < 2) throw ShapeError("simplex needs at least two weights");
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0)) throw ParameterDomainError("simplex weights must be >= 0");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParameterDomainError("simplex weights must sum to 1");
    Transformed r;
    std::vector<double> ww(w.begin(), w.end());
    for (auto& v : ww) {
        if (v < kBoundaryClip) {
            v = kBoundaryClip;
            r.clipped = true;
        }
    }
    r.values.resize(w.size() - 1);
    for (std::size_t k = 0; k + 1 < w.size(); ++k) r.values[k] = std::log(ww[k] / ww.back());
    return r;
}

inline void simplex_from_unconstrained_into(std::span<const double> u, std::span<double> w) noexcept {
    double m = 0.0;
    for (double v : u) m = std::max(m, v);
    double total = std::exp(-m);
    for (std::size_t k = 0; k < u.size(); ++k) total += std::exp(u[k] - m);
    double acc = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        w[k] = std::exp(u[k] - m) / total;
        acc += w[k];
    }
    w[u.size()] = std::max(0.0, 1.0 - acc);
}

inline Transformed simplex_from_unconstrained(std::span<const double> u) {
    Transformed r;
    r.values.resize(u.size() + 1);
    simplex_from_unconstrained_into(u, r.values);
    return r;
}

}  // namespace optscore
