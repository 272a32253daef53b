#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dirmixe/data_synth.hpp"
#include "dirmixe/matrix.hpp"
#include "dirmixe/moe_model.hpp"

namespace dirmixe {

/// Expert weights on the K-simplex.
struct AggregationWeights {
    std::vector<double> omega;

    static AggregationWeights uniform(std::size_t experts);
    static AggregationWeights one_hot(std::size_t experts, std::size_t index);
};

/// Which expert outputs are averaged: softmax probabilities (default) or raw logits.
enum class MixSpace { Probability, Logit };

std::string to_string(MixSpace space);
MixSpace mix_space_from_string(const std::string& name);

/// B x C combination Σ_i ω_i f^(i)(x). In probability space each row is
/// renormalized to sum 1.
Matrix aggregate_logits(const ExpertLogits& logits, const AggregationWeights& omega,
                        MixSpace space = MixSpace::Probability);

struct WeightLearningConfig {
    int steps = 100;
    double lr = 0.05;
    /// Absolute std of the Gaussian view noise; <= 0 means 0.1 x feature std.
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    MixSpace space = MixSpace::Probability;
};

/// Mean per-feature standard deviation of `features`.
double feature_std(const Matrix& features);

/// Per-expert softmax outputs of two independently noise-perturbed views of
/// each row; fixed for the duration of weight learning.
struct NoisyViews {
    std::vector<Matrix> first;   ///< K matrices, n x C
    std::vector<Matrix> second;
};

NoisyViews make_noisy_views(const MoeParams& params, const MoeArchitecture& arch, const Matrix& features,
                            double noise_sigma, Rng& rng);

/// Same, but in logit space the stored per-expert outputs are raw logits.
NoisyViews make_noisy_views_in(const MoeParams& params, const MoeArchitecture& arch, const Matrix& features,
                               double noise_sigma, Rng& rng, MixSpace space);

/// Average cosine similarity between the aggregated predictions of the two views.
double stability_objective(const NoisyViews& views, const std::vector<double>& omega,
                           MixSpace space = MixSpace::Probability);

/// d stability_objective / d omega, treating omega as unconstrained.
std::vector<double> stability_gradient(const NoisyViews& views, const std::vector<double>& omega,
                                       MixSpace space = MixSpace::Probability);

/// Gradient ascent on stability_objective over softmax-parameterized weights
/// (initialized uniform). Model parameters are read-only.
AggregationWeights learn_weights(const MoeParams& params, const MoeArchitecture& arch, const Matrix& features,
                                 const WeightLearningConfig& cfg);

/// Training-count thresholds defining many/medium/few-shot class groups:
/// many if count > many_above, few if count < few_below, medium otherwise.
struct ClassGroups {
    std::vector<int> group_of;  ///< 0 many, 1 medium, 2 few

    static ClassGroups from_counts(const std::vector<std::size_t>& counts, std::size_t many_above,
                                   std::size_t few_below);
};

struct EntryEvaluation {
    std::string name;
    double accuracy = 0.0;
    double acc_many = 0.0;  ///< NaN when the group has no test samples
    double acc_medium = 0.0;
    double acc_few = 0.0;
    std::vector<double> omega;
};

struct EvaluationTable {
    std::vector<EntryEvaluation> entries;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  ///< population std across entries
};

/// Top-1 accuracy of the aggregated predictor on one labeled dataset, plus group accuracies.
EntryEvaluation evaluate_entry(const MoeParams& params, const MoeArchitecture& arch, const TestEntry& entry,
                               const AggregationWeights& weights, const ClassGroups& groups,
                               MixSpace space = MixSpace::Probability);

EvaluationTable evaluate(const MoeParams& params, const MoeArchitecture& arch, const TestSuite& suite,
                         const std::vector<AggregationWeights>& weights_per_entry, const ClassGroups& groups,
                         MixSpace space = MixSpace::Probability);

/// Mean cross-entropy of each expert (its own softmax, true labels) on a labeled set.
std::vector<double> per_expert_losses(const MoeParams& params, const MoeArchitecture& arch, const Dataset& ds);

/// Pearson correlation, per expert, between its weight and its normalized loss
/// ℓ_i / Σ_k ℓ_k across entries. std::nullopt marks a zero-variance series.
/// Throws InvalidParameter with fewer than 3 entries.
std::vector<std::optional<double>> weight_loss_correlation(
    const std::vector<AggregationWeights>& weights_per_entry,
    const std::vector<std::vector<double>>& per_expert_losses_per_entry);

/// Pearson correlation of two equal-length series; nullopt if either is constant.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace dirmixe
