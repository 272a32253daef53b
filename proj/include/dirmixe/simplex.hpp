#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dirmixe/rng.hpp"

namespace dirmixe {

/// Entries of sampled label distributions are clamped to at least this value
/// (then renormalized) so that log-ratios of distributions stay finite.
inline constexpr double kProbabilityFloor = 1e-12;
/// Default Dirichlet concentration of the training meta-distribution components.
inline constexpr double kDefaultTrainConcentration = 10000.0;
inline constexpr double kSimplexTolerance = 1e-9;

/// A point on the probability simplex over C >= 2 classes.
class LabelDistribution {
public:
    LabelDistribution() = default;
    /// Validates: length >= 2, entries >= 0 and finite, sum within 1e-9 of 1.
    explicit LabelDistribution(std::vector<double> probs);

    /// Rescales non-negative weights to sum 1 before validating.
    static LabelDistribution normalized(std::vector<double> weights);
    static LabelDistribution uniform(std::size_t classes);

    /// Clamp every entry to >= floor and renormalize.
    LabelDistribution clamped(double floor = kProbabilityFloor) const;
    LabelDistribution reversed() const;

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }

    bool operator==(const LabelDistribution&) const = default;

private:
    std::vector<double> probs_;
};

enum class ComponentLabel { Forward, Uniform, Backward, Custom };

std::string to_string(ComponentLabel label);
ComponentLabel component_label_from_string(const std::string& name);

/// Dirichlet concentration vector with a role tag.
class DirichletComponent {
public:
    DirichletComponent() = default;
    /// Validates: length >= 2 and every alpha entry finite and > 0.
    DirichletComponent(std::vector<double> alpha, ComponentLabel label);

    std::size_t size() const { return alpha_.size(); }
    const std::vector<double>& alpha() const { return alpha_; }
    ComponentLabel label() const { return label_; }
    double concentration() const;

    bool operator==(const DirichletComponent&) const = default;

private:
    std::vector<double> alpha_;
    ComponentLabel label_ = ComponentLabel::Custom;
};

/// Finite Dirichlet mixture: pick a component from `mix`, then draw from it.
class MetaDistribution {
public:
    MetaDistribution() = default;
    /// Validates: K >= 1 components of equal length, mix on the K-simplex.
    MetaDistribution(std::vector<DirichletComponent> components, std::vector<double> mix);

    std::size_t num_components() const { return components_.size(); }
    std::size_t num_classes() const { return components_.front().size(); }
    const std::vector<DirichletComponent>& components() const { return components_; }
    const std::vector<double>& mix() const { return mix_; }

private:
    std::vector<DirichletComponent> components_;
    std::vector<double> mix_;
};

struct SampledPair {
    LabelDistribution dist;
    std::size_t component_index = 0;

    bool operator==(const SampledPair&) const = default;
};

/// One Gamma(shape, 1) variate.
///
/// Marsaglia–Tsang squeeze/accept for shape >= 1; for shape < 1 the boosting
/// identity Gamma(a) = Gamma(a + 1) · U^{1/a}. Throws InvalidParameter for shape <= 0.
double sample_gamma(double shape, Rng& rng);

/// log of a Gamma(shape, 1) variate; finite even when the variate underflows.
double sample_log_gamma(double shape, Rng& rng);

/// Draw from Dir(alpha) by normalizing independent Gamma draws, then clamp to
/// kProbabilityFloor.
LabelDistribution sample_dirichlet(const DirichletComponent& comp, Rng& rng);

/// Component index from the mixing weights, then a Dirichlet draw from that component.
SampledPair sample_meta(const MetaDistribution& meta, Rng& rng);

/// Three-component training meta-distribution (Forward, Uniform, Backward), mix 1/3 each.
///
/// Forward alpha = S·P, backward alpha is the forward profile reversed in
/// frequency order, uniform alpha = S/C. Classes need not arrive sorted: the
/// prior is sorted descending (ties by index), the backward profile built on
/// the sorted order, and the result mapped back to the original class indices.
MetaDistribution build_training_components(const LabelDistribution& train_prior,
                                           double concentration = kDefaultTrainConcentration);

enum class ShiftKind { Forward, Uniform, Backward };

/// Unnormalized test profile: forward rho^{-(i-1)/(C-1)}, backward rho^{-(C-i)/(C-1)},
/// uniform 1/C (1-based i).
std::vector<double> test_component_profile(std::size_t classes, double rho, ShiftKind kind);

/// test_component_profile scaled to sum `concentration`.
DirichletComponent build_test_component(std::size_t classes, double rho, ShiftKind kind,
                                        double concentration);

/// alpha_i <- alpha_i (1 + eps_i), eps_i ~ U(-0.05, 0.05), then rescale to sum `concentration`.
DirichletComponent perturb_and_normalize(const DirichletComponent& comp, double concentration,
                                         Rng& rng);

LabelDistribution dirichlet_mean(const DirichletComponent& comp);

void to_json(nlohmann::json& j, const LabelDistribution& dist);
void from_json(const nlohmann::json& j, LabelDistribution& dist);
void to_json(nlohmann::json& j, const DirichletComponent& comp);
void from_json(const nlohmann::json& j, DirichletComponent& comp);

}  // namespace dirmixe
