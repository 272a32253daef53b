#pragma once

#include <span>
#include <vector>

#include "dirmixe/data_synth.hpp"
#include "dirmixe/moe_model.hpp"
#include "dirmixe/simplex.hpp"

namespace dirmixe {

/// log(P_te[y] / P_tr[y]) per class; both distributions floored first.
struct AdjustmentVector {
    std::vector<double> log_q;

    static AdjustmentVector between(const LabelDistribution& target, const LabelDistribution& train);
    static AdjustmentVector zero(std::size_t classes) { return {std::vector<double>(classes, 0.0)}; }
};

/// Per-distribution batch-average LA losses and the expert each one used.
struct PoolLosses {
    std::vector<double> values;
    std::vector<std::size_t> component_of;
};

/// Cross-entropy at class y of softmax(logits - log_q), via log-sum-exp.
/// Throws ContractViolation on non-finite input or y out of range.
double la_loss(std::span<const double> logits, std::size_t y, const AdjustmentVector& adj);

/// softmax(logits - log_q) - one_hot(y). Its l1 norm is 2 (1 - p_y) <= 2.
std::vector<double> la_loss_grad_logits(std::span<const double> logits, std::size_t y,
                                        const AdjustmentVector& adj);

/// values[j] = mean over the batch of la_loss using expert ξ_j and log(P_j / P_tr).
PoolLosses pool_losses(const MoeParams& params, const MoeArchitecture& arch, const Dataset& batch,
                       std::span<const SampledPair> pool_subset, const LabelDistribution& train_prior);

struct MeanSemivariance {
    double mean = 0.0;
    double semivar = 0.0;  ///< (1/M) Σ ((ℓ_j - mean)_+)²
};

MeanSemivariance mean_and_semivariance(std::span<const double> values);
MeanSemivariance mean_and_semivariance(const PoolLosses& pl);

/// (1/M) Σ (ℓ_j - mean)²; the population variance the semivariance is bounded by.
double population_variance(std::span<const double> values);

/// mean + lambda * semivar. Throws InvalidParameter for lambda < 0.
double combined_objective(const PoolLosses& pl, double lambda);

/// How the mean inside the hinge is treated when differentiating.
enum class HingeMean { Differentiated, StopGradient };

/// d(mean + λ semivar)/dℓ_j. With the mean differentiated:
///   1/M + (2λ/M) [ (ℓ_j - m)_+ - (1/M) Σ_k (ℓ_k - m)_+ ].
/// The hinge subgradient at ℓ_j == m is 0.
std::vector<double> objective_loss_weights(std::span<const double> values, double lambda,
                                           HingeMean mode = HingeMean::Differentiated);

struct ObjectiveGradient {
    PoolLosses losses;
    double mean = 0.0;
    double semivar = 0.0;
    double objective = 0.0;
    MoeParams grad;
};

/// Objective value and its exact gradient w.r.t. all parameters. One forward
/// pass; per-pair logit gradients are folded into a single backward pass.
ObjectiveGradient objective_grad(const MoeParams& params, const MoeArchitecture& arch, const Dataset& batch,
                                 std::span<const SampledPair> pool_subset, const LabelDistribution& train_prior,
                                 double lambda, HingeMean mode = HingeMean::Differentiated);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> z);

}  // namespace dirmixe
