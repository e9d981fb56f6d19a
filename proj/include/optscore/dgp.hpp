#pragma once

// Simulators for the data-generating processes used in the experiments:
// Gaussian ARCH(1), GARCH(1,1) with standardized Student-t innovations, and
// ARMA(1,1) with a configurable innovation law.

#include "optscore/error.hpp"
#include "optscore/rng.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/student_t_distribution.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace optscore {

/// Ordered real-valued observations, optionally with aligned date labels.
class ReturnSeries {
public:
    ReturnSeries() = default;

    explicit ReturnSeries(std::vector<double> values, std::vector<std::string> dates = {})
        : values_(std::move(values)), dates_(std::move(dates)) {
        if (values_.size() < 2) {
            throw ShapeError("ReturnSeries needs at least 2 observations, got " +
                             std::to_string(values_.size()));
        }
        if (!dates_.empty() && dates_.size() != values_.size()) {
            throw ShapeError("ReturnSeries dates must align 1:1 with values");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw ParameterDomainError("ReturnSeries value at index " + std::to_string(i) +
                                           " is not finite");
            }
        }
    }

    [[nodiscard]] std::span<const double> values() const& noexcept { return values_; }
    std::span<const double> values() const&& = delete;  // would dangle
    [[nodiscard]] const std::vector<std::string>& dates() const noexcept { return dates_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
    std::vector<std::string> dates_;
};

struct StdNormal {};

struct StudentT {
    double nu = 5.0;
    bool standardized = true;  // rescale by sqrt((nu-2)/nu) to unit variance
};

/// Two-component normal mixture p*N(mu1, sigma1^2) + (1-p)*N(mu2, sigma2^2);
/// sigma1 and sigma2 are standard deviations.
struct NormalMixture {
    double p = 0.8;
    double mu1 = 0.3;
    double sigma1 = 0.54;
    double mu2 = -1.2;
    double sigma2 = 1.43;
};

using ErrorDist = std::variant<StdNormal, StudentT, NormalMixture>;

/// y_t = sigma_t * e_t, sigma_t^2 = c + a * y_{t-1}^2, e_t ~ N(0,1).
struct GaussianArch1 {
    double c = 1.0;
    double a = 0.2;
};

/// y_t = sqrt((nu-2)/nu) * sigma_t * e_t, sigma_t^2 = c + a*y_{t-1}^2 + b*sigma_{t-1}^2, e_t ~ t_nu.
struct GarchT {
    double c = 1.0;
    double a = 0.2;
    double b = 0.7;
    double nu = 3.0;
};

/// y_t = phi1 + phi2*y_{t-1} + phi3*e_{t-1} + e_t.
struct Arma11 {
    double phi1 = 0.0;
    double phi2 = 0.95;
    double phi3 = -0.4;
    ErrorDist error = StdNormal{};
};

struct DgpSpec {
    std::variant<GaussianArch1, GarchT, Arma11> process = GaussianArch1{};
    std::size_t burn_in = 1000;
};

struct MixtureMoments {
    double mean;
    double variance;
    double skewness;
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace detail

inline void validate(const ErrorDist& e) {
    std::visit(detail::overloaded{
                   [](const StdNormal&) {},
                   [](const StudentT& t) {
                       if (!(t.nu > 0.0)) throw ParameterDomainError("StudentT: nu must be > 0");
                       if (t.standardized && !(t.nu > 2.0)) {
                           throw ParameterDomainError("StudentT: standardized draws need nu > 2");
                       }
                   },
                   [](const NormalMixture& m) {
                       if (!(m.p >= 0.0 && m.p <= 1.0)) {
                           throw ParameterDomainError("NormalMixture: p must lie in [0,1]");
                       }
                       if (!(m.sigma1 > 0.0) || !(m.sigma2 > 0.0)) {
                           throw ParameterDomainError("NormalMixture: sigma1, sigma2 must be > 0");
                       }
                   }},
               e);
}

inline void validate(const DgpSpec& spec) {
    std::visit(detail::overloaded{
                   [](const GaussianArch1& g) {
                       if (!(g.c > 0.0)) throw ParameterDomainError("GaussianArch1: c must be > 0");
                       if (!(g.a >= 0.0 && g.a < 1.0)) {
                           throw ParameterDomainError("GaussianArch1: need 0 <= a < 1");
                       }
                   },
                   [](const GarchT& g) {
                       if (!(g.c > 0.0)) throw ParameterDomainError("GarchT: c must be > 0");
                       if (!(g.a >= 0.0) || !(g.b >= 0.0)) {
                           throw ParameterDomainError("GarchT: a and b must be >= 0");
                       }
                       if (!(g.a + g.b < 1.0)) throw ParameterDomainError("GarchT: need a + b < 1");
                       if (!(g.nu > 2.0)) throw ParameterDomainError("GarchT: need nu > 2");
                   },
                   [](const Arma11& m) {
                       if (!(std::abs(m.phi2) < 1.0)) {
                           throw ParameterDomainError("Arma11: need |phi2| < 1");
                       }
                       if (!std::isfinite(m.phi1) || !std::isfinite(m.phi3)) {
                           throw ParameterDomainError("Arma11: coefficients must be finite");
                       }
                       validate(m.error);
                   }},
               spec.process);
}

/// Exact mean, variance and skewness of a two-component normal mixture.
inline MixtureMoments mixture_moments(const ErrorDist& e) {
    const auto* m = std::get_if<NormalMixture>(&e);
    if (m == nullptr) {
        throw UnsupportedVariantError("mixture_moments requires a NormalMixture error law");
    }
    validate(e);
    const double w[2] = {m->p, 1.0 - m->p};
    const double mu[2] = {m->mu1, m->mu2};
    const double s2[2] = {m->sigma1 * m->sigma1, m->sigma2 * m->sigma2};
    const double mean = w[0] * mu[0] + w[1] * mu[1];
    double var = 0.0;
    double third = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double d = mu[k] - mean;
        var += w[k] * (s2[k] + d * d);
        third += w[k] * (d * d * d + 3.0 * d * s2[k]);
    }
    return {mean, var, third / std::pow(var, 1.5)};
}

/// Sampler for one innovation law; holds its Boost distribution objects.
class InnovationSampler {
public:
    explicit InnovationSampler(const ErrorDist& e) : dist_(e) {
        validate(e);
        if (const auto* t = std::get_if<StudentT>(&e)) {
            student_ = boost::random::student_t_distribution<double>(t->nu);
            scale_ = t->standardized ? std::sqrt((t->nu - 2.0) / t->nu) : 1.0;
        } else if (const auto* m = std::get_if<NormalMixture>(&e)) {
            pick_ = boost::random::bernoulli_distribution<double>(m->p);
        }
    }

    double operator()(Engine& rng) {
        return std::visit(detail::overloaded{
                              [&](const StdNormal&) { return normal_(rng); },
                              [&](const StudentT&) { return scale_ * student_(rng); },
                              [&](const NormalMixture& m) {
                                  const bool first = pick_(rng);
                                  const double z = normal_(rng);
                                  return first ? m.mu1 + m.sigma1 * z : m.mu2 + m.sigma2 * z;
                              }},
                          dist_);
    }

private:
    ErrorDist dist_;
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
    boost::random::student_t_distribution<double> student_{5.0};
    boost::random::bernoulli_distribution<double> pick_{0.5};
    double scale_ = 1.0;
};

/// n i.i.d. draws from an innovation law.
inline std::vector<double> sample_innovations(const ErrorDist& e, std::size_t n, std::uint64_t seed) {
    InnovationSampler draw(e);
    Engine rng = make_stream(seed, "innovations");
    std::vector<double> out(n);
    for (auto& x : out) x = draw(rng);
    return out;
}

/// Simulates exactly T post-burn-in observations. Deterministic in (spec, T, seed).
/// ARCH/GARCH recursions start at the unconditional variance; ARMA starts at
/// y_0 = phi1/(1-phi2) with a zero lagged innovation.
inline ReturnSeries simulate(const DgpSpec& spec, std::size_t T, std::uint64_t seed) {
    if (T < 2) throw ShapeError("simulate: T must be at least 2");
    validate(spec);
    Engine rng = make_stream(seed, "dgp");
    const std::size_t total = T + spec.burn_in;
    std::vector<double> y(total);

    std::visit(detail::overloaded{
                   [&](const GaussianArch1& g) {
                       boost::random::normal_distribution<double> z(0.0, 1.0);
                       double prev = 0.0;
                       double var = g.c / (1.0 - g.a);
                       for (std::size_t t = 0; t < total; ++t) {
                           if (t > 0) var = g.c + g.a * prev * prev;
                           prev = std::sqrt(var) * z(rng);
                           y[t] = prev;
                       }
                   },
                   [&](const GarchT& g) {
                       InnovationSampler e(StudentT{g.nu, true});
                       double prev = 0.0;
                       double var = g.c / (1.0 - g.a - g.b);
                       for (std::size_t t = 0; t < total; ++t) {
                           if (t > 0) var = g.c + g.a * prev * prev + g.b * var;
                           prev = std::sqrt(var) * e(rng);
                           y[t] = prev;
                       }
                   },
                   [&](const Arma11& m) {
                       InnovationSampler e(m.error);
                       double prev_y = m.phi1 / (1.0 - m.phi2);
                       double prev_e = 0.0;
                       for (std::size_t t = 0; t < total; ++t) {
                           const double eps = e(rng);
                           prev_y = m.phi1 + m.phi2 * prev_y + m.phi3 * prev_e + eps;
                           prev_e = eps;
                           y[t] = prev_y;
                       }
                   }},
               spec.process);

    y.erase(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(spec.burn_in));
    return ReturnSeries(std::move(y));
}

}  // namespace optscore
