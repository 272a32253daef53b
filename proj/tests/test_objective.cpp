#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dirmixe/error.hpp"
#include "dirmixe/objective.hpp"

using namespace dirmixe;

namespace {

AdjustmentVector random_adjustment(std::size_t c, Rng& rng) {
    AdjustmentVector a;
    for (std::size_t i = 0; i < c; ++i) a.log_q.push_back(rng.uniform(-3.0, 3.0));
    return a;
}

std::vector<double> random_logits(std::size_t c, Rng& rng) {
    std::vector<double> z(c);
    for (double& v : z) v = 3.0 * rng.normal();
    return z;
}

Dataset random_batch(std::size_t n, std::size_t d, std::size_t c, Rng& rng) {
    Dataset ds;
    ds.num_classes = c;
    ds.features = Matrix(n, d);
    for (double& v : ds.features.data) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(rng.below(c)));
    ds.prior_used = LabelDistribution::uniform(c);
    return ds;
}

}  // namespace

TEST(LaLoss, PlainCrossEntropyWithoutAdjustment) {
    const std::vector<double> z{0.0, 0.0};
    EXPECT_NEAR(la_loss(z, 0, AdjustmentVector::zero(2)), std::log(2.0), 1e-15);
    const std::vector<double> w{1.0, 2.0, 3.0};
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    EXPECT_NEAR(la_loss(w, 2, AdjustmentVector::zero(3)), lse - 3.0, 1e-14);
}

TEST(LaLoss, AdjustmentShiftsLogits) {
    // Target twice as likely for class 0 as the training prior: class 0 logit drops by log 2.
    const auto adj = AdjustmentVector::between(LabelDistribution({0.8, 0.2}), LabelDistribution({0.4, 0.6}));
    EXPECT_NEAR(adj.log_q[0], std::log(2.0), 1e-15);
    EXPECT_NEAR(adj.log_q[1], std::log(1.0 / 3.0), 1e-15);
    const std::vector<double> z{1.0, 1.0};
    const double z0 = 1.0 - std::log(2.0), z1 = 1.0 - std::log(1.0 / 3.0);
    EXPECT_NEAR(la_loss(z, 0, adj), std::log(std::exp(z0) + std::exp(z1)) - z0, 1e-14);
}

TEST(LaLoss, IdenticalDistributionsGiveZeroAdjustment) {
    const LabelDistribution p({0.2, 0.3, 0.5});
    for (double v : AdjustmentVector::between(p, p).log_q) EXPECT_EQ(v, 0.0);
}

TEST(LaLoss, InvariantToCommonLogitShift) {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        auto z = random_logits(6, rng);
        const auto adj = random_adjustment(6, rng);
        const double base = la_loss(z, 2, adj);
        for (double& v : z) v += 17.0;
        EXPECT_NEAR(la_loss(z, 2, adj), base, 1e-12);
    }
}

TEST(LaLoss, RejectsNonFiniteAndBadLabel) {
    const std::vector<double> z{0.0, std::nan("")};
    EXPECT_THROW(la_loss(z, 0, AdjustmentVector::zero(2)), ContractViolation);
    const std::vector<double> ok{0.0, 1.0};
    EXPECT_THROW(la_loss(ok, 2, AdjustmentVector::zero(2)), ContractViolation);
}

TEST(LaLossGrad, NormIdentityAndBound) {
    Rng rng(2);
    for (int t = 0; t < 2000; ++t) {
        const std::size_t c = 2 + rng.below(9);
        const auto z = random_logits(c, rng);
        const auto adj = random_adjustment(c, rng);
        const std::size_t y = rng.below(c);
        const auto g = la_loss_grad_logits(z, y, adj);
        double l1 = 0.0;
        for (double v : g) l1 += std::fabs(v);
        const double py = std::exp(-la_loss(z, y, adj));
        EXPECT_LE(l1, 2.0 + 1e-12);
        EXPECT_NEAR(l1, 2.0 * (1.0 - py), 1e-12);
    }
}

TEST(LaLossGrad, MatchesFiniteDifferences) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        auto z = random_logits(5, rng);
        const auto adj = random_adjustment(5, rng);
        const std::size_t y = rng.below(5);
        const auto g = la_loss_grad_logits(z, y, adj);
        for (std::size_t c = 0; c < 5; ++c) {
            const double keep = z[c];
            z[c] = keep + 1e-6;
            const double up = la_loss(z, y, adj);
            z[c] = keep - 1e-6;
            const double down = la_loss(z, y, adj);
            z[c] = keep;
            EXPECT_NEAR(g[c], (up - down) / 2e-6, 1e-8);
        }
    }
}

TEST(Estimators, WorkedExample) {
    const std::vector<double> v{1.0, 2.0, 3.0};
    const auto ms = mean_and_semivariance(v);
    EXPECT_DOUBLE_EQ(ms.mean, 2.0);
    EXPECT_NEAR(ms.semivar, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(population_variance(v), 2.0 / 3.0, 1e-15);
}

TEST(Estimators, ConstantVectorHasZeroSemivariance) {
    const std::vector<double> v(8, 0.7);
    EXPECT_EQ(mean_and_semivariance(v).semivar, 0.0);
}

TEST(Estimators, SemivarianceNeverExceedsVariance) {
    Rng rng(4);
    for (int t = 0; t < 2000; ++t) {
        std::vector<double> v(1 + rng.below(30));
        for (double& x : v) x = std::exp(rng.normal());
        EXPECT_LE(mean_and_semivariance(v).semivar, population_variance(v) + 1e-15);
    }
}

TEST(Estimators, CombinedObjective) {
    PoolLosses pl;
    pl.values = {1.0, 2.0, 3.0};
    pl.component_of = {0, 0, 0};
    EXPECT_DOUBLE_EQ(combined_objective(pl, 0.0), 2.0);
    EXPECT_NEAR(combined_objective(pl, 3.0), 3.0, 1e-15);
    EXPECT_THROW(combined_objective(pl, -0.1), InvalidParameter);
}

TEST(LossWeights, MatchFiniteDifferencesOfObjective) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(2 + rng.below(10));
        for (double& x : v) x = rng.uniform(0.0, 5.0);
        const double lambda = rng.uniform(0.0, 4.0);
        const auto w = objective_loss_weights(v, lambda);
        auto f = [&](const std::vector<double>& u) {
            const auto ms = mean_and_semivariance(u);
            return ms.mean + lambda * ms.semivar;
        };
        for (std::size_t j = 0; j < v.size(); ++j) {
            auto up = v, down = v;
            up[j] += 1e-6;
            down[j] -= 1e-6;
            EXPECT_NEAR(w[j], (f(up) - f(down)) / 2e-6, 1e-7);
        }
    }
}

TEST(LossWeights, StopGradientDropsMeanCoupling) {
    const std::vector<double> v{1.0, 2.0, 6.0};
    const auto w = objective_loss_weights(v, 2.0, HingeMean::StopGradient);
    EXPECT_NEAR(w[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(w[2], 1.0 / 3.0 + (4.0 / 3.0) * 3.0, 1e-14);
    const auto d = objective_loss_weights(v, 0.0);
    for (double x : d) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(PoolLosses, UsesEachPairsExpertAndAdjustment) {
    MoeArchitecture arch;
    arch.d_in = 2;
    arch.hidden = {3};
    arch.num_classes = 3;
    arch.num_experts = 2;
    const auto params = init_params(arch, 1);
    Rng rng(6);
    const auto batch = random_batch(7, 2, 3, rng);
    const LabelDistribution train({0.5, 0.3, 0.2});
    const std::vector<SampledPair> pairs{{LabelDistribution({0.2, 0.3, 0.5}), 1},
                                         {LabelDistribution({0.6, 0.2, 0.2}), 0}};
    const auto pl = pool_losses(params, arch, batch, pairs, train);
    ASSERT_EQ(pl.values.size(), 2u);
    EXPECT_EQ(pl.component_of, (std::vector<std::size_t>{1, 0}));
    const auto logits = forward(params, arch, batch.features);
    for (std::size_t j = 0; j < 2; ++j) {
        const auto adj = AdjustmentVector::between(pairs[j].dist, train);
        double s = 0.0;
        for (std::size_t b = 0; b < 7; ++b)
            s += la_loss(logits.row(b, pairs[j].component_index), static_cast<std::size_t>(batch.labels[b]), adj);
        EXPECT_NEAR(pl.values[j], s / 7.0, 1e-13);
    }
}

TEST(ObjectiveGrad, MatchesFiniteDifferences) {
    Rng rng(7);
    for (int inst = 0; inst < 6; ++inst) {
        MoeArchitecture arch;
        arch.d_in = 3;
        arch.hidden = {4};
        arch.num_classes = inst % 2 ? 5 : 2;
        arch.num_experts = inst % 3 ? 3 : 1;
        arch.activation = Activation::Tanh;
        auto params = init_params(arch, 100 + inst);
        const auto batch = random_batch(6, 3, arch.num_classes, rng);
        const auto train = LabelDistribution::normalized(std::vector<double>(arch.num_classes, 1.0));
        const auto meta = build_training_components(longtail_prior(arch.num_classes, 10.0), 20.0);
        std::vector<SampledPair> pairs;
        for (int j = 0; j < 5; ++j) {
            auto p = sample_meta(meta, rng);
            p.component_index %= arch.num_experts;
            pairs.push_back(p);
        }
        const double lambda = 1.5;
        const auto og = objective_grad(params, arch, batch, pairs, train, lambda);
        EXPECT_NEAR(og.objective, og.mean + lambda * og.semivar, 1e-14);
        const auto grad = og.grad.flatten();
        auto flat = params.flatten();
        double max_rel = 0.0;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double keep = flat[i];
            const double h = 1e-5;
            flat[i] = keep + h;
            params.assign_flat(flat);
            const double up = combined_objective(pool_losses(params, arch, batch, pairs, train), lambda);
            flat[i] = keep - h;
            params.assign_flat(flat);
            const double down = combined_objective(pool_losses(params, arch, batch, pairs, train), lambda);
            flat[i] = keep;
            params.assign_flat(flat);
            const double fd = (up - down) / (2 * h);
            max_rel = std::max(max_rel, std::fabs(grad[i] - fd) / std::max(1e-3, std::fabs(fd)));
        }
        EXPECT_LT(max_rel, 1e-5) << "instance " << inst;
    }
}

TEST(Softmax, StableAndNormalized) {
    const std::vector<double> z{1000.0, 1000.0, -1000.0};
    const auto p = softmax(z);
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_NEAR(p[2], 0.0, 1e-300);
}
