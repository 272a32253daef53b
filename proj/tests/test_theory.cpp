#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dirmixe/error.hpp"
#include "dirmixe/theory.hpp"
#include "dirmixe/trainer.hpp"

using namespace dirmixe;

namespace {

constexpr double kInvE = 0.36787944117144233;
constexpr double kTwoOverE = 0.73575888234288464;

// Tolerance for a Monte Carlo ratio: four standard errors plus a small floor.
double mc_tol(const RhoReport& r) { return 4.0 * r.ci_halfwidth + 1e-3; }

}  // namespace

TEST(RhoBound, ClosedForms) {
    EXPECT_NEAR(rho_bound(ExponentialTail{1.0}), kInvE, 1e-15);
    EXPECT_NEAR(rho_bound(ExponentialTail{7.0}), kInvE, 1e-15);
    EXPECT_NEAR(rho_bound(GammaTail{1.0, 1.0}), kInvE, 1e-12);
    // 1 - a P(a, a) with P frozen from an arbitrary-precision evaluation.
    EXPECT_NEAR(rho_bound(GammaTail{0.5, 3.0}), 1.0 - 0.5 * 0.6826894921370859, 1e-12);
    EXPECT_NEAR(rho_bound(GammaTail{0.2, 1.0}), 1.0 - 0.2 * 0.764434597502919, 1e-12);
    EXPECT_NEAR(rho_bound(GammaTail{0.7, 1.0}), 1.0 - 0.7 * 0.65658906025950414, 1e-12);
}

TEST(RhoBound, GammaGridIsDecreasingTowardInverseE) {
    const double expected[] = {0.84711, 0.78191, 0.71942, 0.65866, 0.59908, 0.54039, 0.48237, 0.42490, 0.367879};
    for (int i = 0; i < 9; ++i) {
        const double a = 0.2 + 0.1 * i;
        EXPECT_NEAR(rho_bound(GammaTail{a, 1.0}), expected[i], 1e-5) << a;
    }
}

TEST(RhoBound, DoubleNormalizedReading) {
    const double expected[] = {0.9667, 0.9271, 0.8735, 0.8074, 0.7308, 0.6459, 0.5554, 0.4618, 0.3679};
    for (int i = 0; i < 9; ++i)
        EXPECT_NEAR(gamma_bound_double_normalized(0.2 + 0.1 * i), expected[i], 1e-4);
    EXPECT_NEAR(gamma_bound_double_normalized(0.5), 1.0 - 0.5 * 0.6826894921370859 / std::sqrt(std::numbers::pi),
                1e-12);
}

TEST(RhoBound, ParetoExactRatio) {
    // Exact V+/V of Pareto(theta, l): theta = 3 gives 8/9 by direct integration.
    EXPECT_NEAR(rho_bound(ParetoTail{3.0, 1.0}), 8.0 / 9.0, 1e-12);
    EXPECT_NEAR(rho_bound(ParetoTail{5.0, 0.1}), 0.8192, 1e-12);
    EXPECT_NEAR(rho_bound(ParetoTail{10.0, 2.0}), 0.774840978, 1e-8);
    EXPECT_NEAR(pareto_printed_ratio(3.0), 1.0 / 9.0, 1e-12);
    EXPECT_DOUBLE_EQ(rho_bound(ParetoTail{4.0, 0.1}), rho_bound(ParetoTail{4.0, 50.0}));
    EXPECT_THROW(rho_bound(ParetoTail{2.0, 1.0}), InvalidParameter);
    EXPECT_THROW(validate(GammaTail{0.0, 1.0}), InvalidParameter);
    EXPECT_THROW(validate(ExponentialTail{-1.0}), InvalidParameter);
}

TEST(RhoMonteCarlo, ExponentialMatchesExactRatio) {
    Rng rng(1);
    const auto r = rho_monte_carlo(ExponentialTail{3.0}, 1'000'000, rng);
    ASSERT_TRUE(r.rho_mc);
    EXPECT_NEAR(*r.rho_mc, kTwoOverE, mc_tol(r));
    EXPECT_GT(*r.rho_mc, r.rho_bound);
    EXPECT_NEAR(r.mean, 1.0 / 3.0, 0.002);
    EXPECT_NEAR(r.variance, 1.0 / 9.0, 0.002);
    EXPECT_EQ(r.samples, 1'000'000u);
}

TEST(RhoMonteCarlo, ParetoMatchesExactRatio) {
    for (double theta : {5.0, 10.0}) {
        Rng rng(2);
        const auto r = rho_monte_carlo(ParetoTail{theta, 0.1}, 1'000'000, rng);
        ASSERT_TRUE(r.rho_mc);
        EXPECT_NEAR(*r.rho_mc, r.rho_bound, mc_tol(r)) << theta;
    }
}

TEST(RhoMonteCarlo, GammaGridRespectsBound) {
    for (double a = 0.2; a < 1.05; a += 0.2) {
        Rng rng(3);
        const auto r = rho_monte_carlo(GammaTail{a, 1.0}, 200'000, rng);
        ASSERT_TRUE(r.rho_mc);
        EXPECT_GE(*r.rho_mc + 4.0 * r.ci_halfwidth, r.rho_bound) << a;
    }
}

TEST(RhoMonteCarlo, ReproducibleAndRejectsSmallN) {
    Rng a(5), b(5);
    EXPECT_EQ(*rho_monte_carlo(GammaTail{0.5, 1.0}, 20'000, a).rho_mc,
              *rho_monte_carlo(GammaTail{0.5, 1.0}, 20'000, b).rho_mc);
    Rng c(5);
    EXPECT_THROW(rho_monte_carlo(ExponentialTail{1.0}, 9'999, c), InvalidParameter);
}

TEST(RhoFromSamples, AffineInvarianceAndReflection) {
    Rng rng(6);
    std::vector<double> x(5000), y(5000), neg(5000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = sample_tail(GammaTail{0.7, 1.0}, rng);
        y[i] = 4.0 * x[i] - 17.0;
        neg[i] = -x[i];
    }
    const auto rx = rho_from_samples(x);
    EXPECT_NEAR(*rx.rho_mc, *rho_from_samples(y).rho_mc, 1e-10);
    EXPECT_NEAR(*rho_from_samples(neg).rho_mc, 1.0 - *rx.rho_mc, 1e-10);
    EXPECT_TRUE(std::isnan(rx.rho_bound));
    EXPECT_GE(rx.semivariance, 0.0);
    EXPECT_LE(rx.semivariance, rx.variance);
    const std::vector<double> constant(100, 2.5);
    EXPECT_FALSE(rho_from_samples(constant).rho_mc.has_value());
    // Two points: one above, one below the mean; equal squared deviations.
    const std::vector<double> pair{0.0, 1.0};
    EXPECT_NEAR(*rho_from_samples(pair).rho_mc, 0.5, 1e-15);
}

TEST(MixtureCheck, IdenticalComponentsGiveEquality) {
    Rng rng(7);
    const auto r = mixture_rho_check({{0.3, GammaTail{0.8, 1.0}}, {0.7, GammaTail{0.8, 1.0}}}, 50'000, rng);
    EXPECT_TRUE(r.assumptions_hold);
    ASSERT_TRUE(r.holds.has_value());
    EXPECT_TRUE(*r.holds);
    EXPECT_NEAR(r.rho_mix, r.sum_weighted_rho_i, 1e-12);
    EXPECT_NEAR(r.rho_i[0], r.rho_i[1], 1e-15);
}

TEST(MixtureCheck, SeparatedComponentsAreNotApplicable) {
    Rng rng(8);
    const auto r = mixture_rho_check({{0.5, GammaTail{0.5, 1.0}}, {0.5, GammaTail{0.9, 1.0}}}, 50'000, rng);
    EXPECT_FALSE(r.assumptions_hold);
    EXPECT_LT(r.assumption_margin, 0.0);
    EXPECT_FALSE(r.holds.has_value());
    ASSERT_EQ(r.cross_lower.size(), 2u);
    // The diagonal is each component's own lower semivariance, which sums with V+ to sigma^2.
    for (std::size_t i = 0; i < 2; ++i)
        EXPECT_NEAR(r.cross_lower[i][i] + r.rho_i[i] * r.sigma2_i[i], r.sigma2_i[i], 1e-9 * r.sigma2_i[i]);
    EXPECT_GT(r.variance_mix, 0.0);
}

TEST(MixtureCheck, InputValidation) {
    Rng rng(9);
    EXPECT_THROW(mixture_rho_check({{1.0, GammaTail{1.0, 1.0}}}, 50'000, rng), InvalidParameter);
    EXPECT_THROW(mixture_rho_check({{0.5, GammaTail{1.0, 1.0}}, {0.6, GammaTail{1.0, 1.0}}}, 50'000, rng),
                 InvalidParameter);
    EXPECT_THROW(mixture_rho_check({{0.5, GammaTail{1.0, 1.0}}, {0.5, GammaTail{1.0, 1.0}}}, 10, rng),
                 InvalidParameter);
}

TEST(ModelRho, InUnitIntervalAndDeterministic) {
    const auto model = make_conditionals(5, 2, 2.0, 1);
    Rng data(1);
    const auto ds = sample_dataset(model, longtail_prior(5, 10.0), 500, data);
    MoeArchitecture arch;
    arch.hidden = {8};
    arch.num_classes = 5;
    const auto params = init_params(arch, 3);
    const auto meta = training_meta_for(empirical_prior(ds), 3, 1e4);
    Rng a(4), b(4);
    const auto ra = model_rho(params, arch, ds, meta, 200, a);
    const auto rb = model_rho(params, arch, ds, meta, 200, b);
    ASSERT_TRUE(ra.has_value());
    EXPECT_GT(*ra, 0.0);
    EXPECT_LE(*ra, 1.0);
    EXPECT_EQ(*ra, *rb);

    Rng c(5);
    const auto pair = sample_meta(meta, c);
    const std::vector<SampledPair> same(10, pair);
    EXPECT_FALSE(model_rho_for_pairs(params, arch, ds, same).has_value());
    EXPECT_THROW(model_rho_for_pairs(params, arch, ds, {}), InvalidParameter);
}
