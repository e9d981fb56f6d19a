#include "optscore/dgp.hpp"
#include "optscore/optimizer.hpp"
#include "optscore/rng.hpp"
#include "optscore/transforms.hpp"

#include <boost/random/normal_distribution.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

using namespace optscore;

namespace {

// Coarse grid over a box, then three zoomed grids around the incumbent.
double grid_search_best(const std::function<double(std::span<const double>)>& f, std::vector<double> lo,
                        std::vector<double> hi, std::vector<double>* where = nullptr) {
    const std::size_t d = lo.size();
    std::vector<double> best_x(d);
    double best = -std::numeric_limits<double>::infinity();
    for (int stage = 0; stage < 4; ++stage) {
        const int n = stage == 0 ? 41 : 21;
        std::vector<int> idx(d, 0);
        std::vector<double> x(d);
        while (true) {
            for (std::size_t k = 0; k < d; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * idx[k] / (n - 1.0);
            const double v = f(x);
            if (std::isfinite(v) && v > best) {
                best = v;
                best_x = x;
            }
            std::size_t k = 0;
            while (k < d && ++idx[k] == n) idx[k++] = 0;
            if (k == d) break;
        }
        for (std::size_t k = 0; k < d; ++k) {
            const double cell = (hi[k] - lo[k]) / (n - 1.0);
            lo[k] = best_x[k] - 2.0 * cell;
            hi[k] = best_x[k] + 2.0 * cell;
        }
    }
    if (where) *where = best_x;
    return best;
}

void expect_local_maximum(ScoreCriterion& crit, const OptimizationReport& rep) {
    for (std::size_t k = 0; k < rep.unconstrained.size(); ++k) {
        for (double h : {-1e-4, 1e-4}) {
            auto u = rep.unconstrained;
            u[k] += h;
            EXPECT_LE(crit(u), rep.value + 1e-12) << "coordinate " << k;
        }
    }
}

std::vector<double> normal_draws(std::size_t n, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
    auto eng = make_stream(seed, "test-draws");
    boost::random::normal_distribution<double> nd(mean, sd);
    std::vector<double> y(n);
    for (auto& v : y) v = nd(eng);
    return y;
}

}  // namespace

TEST(Transforms, FamilyRoundTrips) {
    const std::vector<std::pair<ModelFamily, std::vector<double>>> cases{
        {ModelFamily::iid_normal, {0.3, 2.0}},           {ModelFamily::arch1, {-0.1, 0.7, 0.25}},
        {ModelFamily::arch1_fixed_mean, {1.3, 0.9}},     {ModelFamily::garch11, {0.05, 0.1, 0.2, 0.7}},
        {ModelFamily::ar1_normal, {0.2, -0.95, 0.5}},    {ModelFamily::ma1_normal, {0.0, 0.4, 3.0}}};
    for (const auto& [f, th] : cases) {
        const auto u = to_unconstrained(f, th);
        EXPECT_FALSE(u.clipped);
        const auto back = from_unconstrained(f, u.values);
        EXPECT_FALSE(back.clipped);
        for (std::size_t k = 0; k < th.size(); ++k) EXPECT_NEAR(back.values[k], th[k], 1e-12) << family_name(f);
    }
}

TEST(Transforms, Examples) {
    EXPECT_EQ(to_unconstrained(ModelFamily::iid_normal, std::vector<double>{0.0, 1.0}).values[1], 0.0);
    const auto g = from_unconstrained(ModelFamily::garch11,
                                      to_unconstrained(ModelFamily::garch11, std::vector<double>{0, 1, 0.2, 0.7}).values);
    EXPECT_NEAR(g.values[2], 0.2, 1e-12);
    EXPECT_NEAR(g.values[3], 0.7, 1e-12);
    const std::vector<double> w{0.2, 0.3, 0.5};
    const auto back = simplex_from_unconstrained(simplex_to_unconstrained(w).values);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(back.values[k], w[k], 1e-12);
}

TEST(Transforms, BoundaryInputsAreClippedAndFlagged) {
    const auto s = simplex_to_unconstrained(std::vector<double>{0.0, 1.0});
    EXPECT_TRUE(s.clipped);
    EXPECT_NEAR(simplex_from_unconstrained(s.values).values[0], kBoundaryClip, 1e-15);
    EXPECT_TRUE(to_unconstrained(ModelFamily::arch1, std::vector<double>{0.0, 1.0, 0.0}).clipped);
    EXPECT_THROW(to_unconstrained(ModelFamily::arch1, std::vector<double>{0.0, -1.0, 0.1}), ParameterDomainError);
    EXPECT_THROW(simplex_to_unconstrained(std::vector<double>{0.5, 0.6}), ParameterDomainError);
}

TEST(NelderMead, TraceNeverDecreases) {
    const std::function<double(std::span<const double>)> f = [](std::span<const double> x) {
        const double a = 1.0 - x[0];
        const double b = x[1] - x[0] * x[0];
        return -(a * a + 100.0 * b * b);
    };
    NelderMeadOptions opt;
    opt.record_trace = true;
    opt.max_iterations = 5000;
    const auto r = nelder_mead_maximize(f, std::vector<double>{-1.2, 1.0}, opt);
    ASSERT_FALSE(r.trace.empty());
    for (std::size_t k = 1; k < r.trace.size(); ++k) ASSERT_GE(r.trace[k], r.trace[k - 1]);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.argmax[0], 1.0, 1e-5);
    EXPECT_NEAR(r.argmax[1], 1.0, 1e-5);
}

TEST(NelderMead, TraceOnScoreCriterion) {
    const auto y = simulate(DgpSpec{GarchT{1.0, 0.2, 0.7, 3.0}}, 400, 5);
    ScoreCriterion crit(ModelFamily::arch1, y.values(), resolve(*parse_rule("cls@0.10:lower"), y.values()));
    const std::function<double(std::span<const double>)> f = [&](std::span<const double> u) { return crit(u); };
    NelderMeadOptions opt;
    opt.record_trace = true;
    const auto r = nelder_mead_maximize(f, std::vector<double>{0.0, 0.0, 0.0}, opt);
    for (std::size_t k = 1; k < r.trace.size(); ++k) ASSERT_GE(r.trace[k], r.trace[k - 1]);
}

TEST(OptimalScore, IidNormalLogScoreIsMle) {
    const auto y = normal_draws(500, 3, 0.4, 1.7);
    const auto rep = optimal_score_estimate(ModelFamily::iid_normal, y, LogScore{}, std::vector<double>{0.0, 1.0});
    // The criterion scores y_1..y_{n-1}.
    const std::span<const double> used(y.data() + 1, y.size() - 1);
    const double mean = std::accumulate(used.begin(), used.end(), 0.0) / used.size();
    double var = 0.0;
    for (double v : used) var += (v - mean) * (v - mean);
    var /= used.size();
    EXPECT_NEAR(rep.argmax[0], mean, 1e-6);
    EXPECT_NEAR(rep.argmax[1], var, 1e-6);
    EXPECT_TRUE(rep.converged);
    EXPECT_FALSE(rep.non_identified);
}

TEST(OptimalScore, Ar1LogScoreIsLeastSquares) {
    const auto a = simulate(DgpSpec{Arma11{}}, 800, 4);
    const auto y = a.values();
    const std::size_t n = y.size() - 1;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        sx += y[t - 1];
        sy += y[t];
        sxx += y[t - 1] * y[t - 1];
        sxy += y[t - 1] * y[t];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    double s2 = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        const double e = y[t] - icpt - slope * y[t - 1];
        s2 += e * e;
    }
    s2 /= n;
    const auto rep = optimal_score_estimate(ModelFamily::ar1_normal, y, LogScore{}, std::vector<double>{0.0, 0.0, 1.0});
    EXPECT_NEAR(rep.argmax[0], icpt, 1e-6);
    EXPECT_NEAR(rep.argmax[1], slope, 1e-6);
    EXPECT_NEAR(rep.argmax[2], s2, 1e-6);
}

TEST(OptimalScore, MatchesGridSearchOracle) {
    const auto data = simulate(DgpSpec{GarchT{1.0, 0.2, 0.7, 3.0}}, 200, 12);
    const auto y = data.values();
    struct Fixture {
        ModelFamily family;
        const char* rule;
        std::vector<double> lo, hi;
    };
    const std::vector<Fixture> fixtures{
        {ModelFamily::iid_normal, "crps", {-2.0, 0.1}, {2.0, 20.0}},
        {ModelFamily::iid_normal, "cls@0.10:lower", {-2.0, 0.1}, {2.0, 20.0}},
        {ModelFamily::arch1, "ls", {-1.5, 0.1}, {1.5, 8.0}},
        {ModelFamily::arch1, "crps", {-1.5, 0.1}, {1.5, 8.0}},
        {ModelFamily::arch1_fixed_mean, "cls@0.90:upper", {0.05, 0.0}, {10.0, 0.999}},
        {ModelFamily::ar1_normal, "qs@0.05", {-1.5, -0.95}, {1.5, 0.95}},
    };
    for (const auto& fx : fixtures) {
        const auto rule = resolve(*parse_rule(fx.rule), y);
        ScoreCriterion crit(fx.family, y, rule);
        auto lo = fx.lo;
        auto hi = fx.hi;
        if (fx.family == ModelFamily::arch1) {
            lo.push_back(0.0);
            hi.push_back(0.999);
        }
        if (fx.family == ModelFamily::ar1_normal) {
            lo.push_back(0.1);
            hi.push_back(20.0);
        }
        ScoreCriterion grid_crit(fx.family, y, rule);
        const std::function<double(std::span<const double>)> f = [&](std::span<const double> th) {
            return in_domain(fx.family, th) ? grid_crit.at_natural(th) : -std::numeric_limits<double>::infinity();
        };
        const double grid = grid_search_best(f, lo, hi);
        const auto rep = optimal_score_estimate(fx.family, y, rule, default_initial_parameters(fx.family, y));
        EXPECT_NEAR(rep.value, grid, 1e-3) << family_name(fx.family) << " " << fx.rule;
        expect_local_maximum(crit, rep);
    }
}

TEST(OptimalScore, Arch1ConsistentAtLargeSample) {
    const auto y = simulate(DgpSpec{GaussianArch1{1.0, 0.2}}, 10'000, 21);
    const auto rep =
        optimal_score_estimate(ModelFamily::arch1, y.values(), LogScore{}, std::vector<double>{0.1, 0.5, 0.5});
    EXPECT_NEAR(rep.argmax[0], 0.0, 0.05);
    EXPECT_NEAR(rep.argmax[1], 1.0, 0.05);
    EXPECT_NEAR(rep.argmax[2], 0.2, 0.05);
}

TEST(OptimalScore, FlatCriterionIsFlaggedAndStaysAtInit) {
    const auto y = normal_draws(100, 8);
    // No observation ever falls in this region, and its complement has mass 1.
    const CensoredLs rule{Region{TailSide::lower, 0.1, -1e6}};
    const std::vector<double> init{0.2, 1.5};
    const auto rep = optimal_score_estimate(ModelFamily::iid_normal, y, rule, init);
    EXPECT_TRUE(rep.non_identified);
    EXPECT_EQ(rep.value, 0.0);
    EXPECT_NEAR(rep.argmax[0], init[0], 1e-12);
    EXPECT_NEAR(rep.argmax[1], init[1], 1e-12);
}

TEST(OptimalScore, FailureCarriesIncumbent) {
    const auto y = normal_draws(100, 9);
    OptimizerOptions opt;
    opt.nelder_mead.max_iterations = 1;
    opt.max_polish = 0;
    try {
        optimal_score_estimate(ModelFamily::iid_normal, y, LogScore{}, std::vector<double>{5.0, 9.0}, opt);
        FAIL() << "expected OptimizationFailure";
    } catch (const OptimizationFailure& e) {
        ASSERT_EQ(e.incumbent().size(), 2u);
        EXPECT_TRUE(std::isfinite(e.value()));
        EXPECT_GT(e.incumbent()[1], 0.0);
    }
}

TEST(OptimalScore, Preconditions) {
    const auto y = normal_draws(29, 1);
    EXPECT_THROW(optimal_score_estimate(ModelFamily::iid_normal, y, LogScore{}, std::vector<double>{0, 1}),
                 InsufficientHistoryError);
    const auto z = normal_draws(50, 1);
    EXPECT_THROW(optimal_score_estimate(ModelFamily::iid_normal, z, LogScore{}, std::vector<double>{0, -1}),
                 ParameterDomainError);
}

TEST(OptimalScore, WarmStartReachesSameOptimum) {
    const auto y = simulate(DgpSpec{GaussianArch1{}}, 1000, 30);
    const auto cold =
        optimal_score_estimate(ModelFamily::arch1, y.values(), LogScore{}, std::vector<double>{0.0, 1.0, 0.3});
    const auto warm = optimal_score_estimate(ModelFamily::arch1, y.values(), LogScore{}, cold.argmax, {}, true);
    EXPECT_EQ(warm.restarts_used, 1);
    EXPECT_NEAR(warm.value, cold.value, 1e-9);
}

namespace {

ComponentMatrix constant_components(std::size_t rows, const std::vector<GaussianMoments>& comps) {
    ComponentMatrix m(rows, comps.size());
    for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t k = 0; k < comps.size(); ++k) m(t, k) = comps[k];
    }
    return m;
}

void expect_on_simplex(const std::vector<double>& w) {
    double s = 0.0;
    for (double v : w) {
        EXPECT_GE(v, 0.0);
        s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
}

}  // namespace

TEST(PoolWeights, DominatingComponentTakesAllWeight) {
    const auto y = normal_draws(200, 14);
    const auto m = constant_components(y.size(), {{0.0, 1.0}, {5.0, 1.0}, {-4.0, 0.5}});
    const auto rep = optimal_pool_weights(m, y, LogScore{}, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
    EXPECT_GT(rep.argmax[0], 0.99);
    expect_on_simplex(rep.argmax);
}

TEST(PoolWeights, IdenticalComponentsMatchSingleComponentCriterion) {
    const auto y = normal_draws(100, 15);
    const auto m = constant_components(y.size(), {{0.1, 1.2}, {0.1, 1.2}});
    const auto rep = optimal_pool_weights(m, y, LogScore{}, std::vector<double>{0.5, 0.5});
    double single = 0.0;
    for (double v : y) single += gaussian_log_density(0.1, 1.2, v);
    single /= y.size();
    EXPECT_NEAR(rep.value, single, 1e-12);
    expect_on_simplex(rep.argmax);
    EXPECT_TRUE(rep.non_identified);
}

TEST(PoolWeights, TwoComponentsMatchFineGrid) {
    // A zeta = 50 window drawn from a mixture, pooled over two misspecified laws.
    auto eng = make_stream(16, "pool-grid");
    boost::random::normal_distribution<double> nd;
    std::vector<double> y(50);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] = t % 3 == 0 ? 1.5 + 0.5 * nd(eng) : -0.5 + nd(eng);
    ComponentMatrix m(y.size(), 2);
    for (std::size_t t = 0; t < y.size(); ++t) {
        m(t, 0) = {-0.5 + 0.01 * static_cast<double>(t % 5), 1.0};
        m(t, 1) = {1.0, 1.5};
    }
    for (const char* name : {"ls", "crps", "cls@0.80:upper"}) {
        const auto rule = resolve(*parse_rule(name), y);
        PoolCriterion crit(m, y, rule);
        double best = -std::numeric_limits<double>::infinity();
        double best_w = 0.0;
        for (int k = 0; k <= 1000; ++k) {
            const double w0 = k / 1000.0;
            const std::vector<double> w{w0, 1.0 - w0};
            const double v = crit.at_weights(w);
            if (v > best) {
                best = v;
                best_w = w0;
            }
        }
        const auto rep = optimal_pool_weights(m, y, rule, std::vector<double>{0.5, 0.5});
        EXPECT_NEAR(rep.argmax[0], best_w, 1e-2) << name;
        EXPECT_NEAR(rep.value, best, 1e-3) << name;
        expect_on_simplex(rep.argmax);
    }
}

TEST(PoolWeights, ShapeErrors) {
    const auto y = normal_draws(10, 1);
    const auto m = constant_components(y.size(), {{0.0, 1.0}, {1.0, 1.0}});
    EXPECT_THROW(optimal_pool_weights(m, std::span<const double>(y).first(5), LogScore{}, std::vector<double>{0.5, 0.5}),
                 ShapeError);
    EXPECT_THROW(optimal_pool_weights(m, y, LogScore{}, std::vector<double>{1.0}), ShapeError);
    const auto one = constant_components(y.size(), {{0.0, 1.0}});
    EXPECT_THROW(optimal_pool_weights(one, y, LogScore{}, std::vector<double>{1.0}), ShapeError);
}
