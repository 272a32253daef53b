#include "dirmixe/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dirmixe/error.hpp"

namespace dirmixe {

namespace {

double sum_of(std::span<const double> xs) { return std::accumulate(xs.begin(), xs.end(), 0.0); }

ComponentLabel label_for(ShiftKind kind) {
    switch (kind) {
        case ShiftKind::Forward: return ComponentLabel::Forward;
        case ShiftKind::Uniform: return ComponentLabel::Uniform;
        case ShiftKind::Backward: return ComponentLabel::Backward;
    }
    return ComponentLabel::Custom;
}

}  // namespace

// ---------------------------------------------------------------------------
// LabelDistribution

LabelDistribution::LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw InvalidParameter("label distribution needs at least 2 classes");
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0)
            throw InvalidParameter("label distribution entries must be finite and non-negative");
    }
    if (std::fabs(sum_of(probs_) - 1.0) > kSimplexTolerance)
        throw InvalidParameter("label distribution must sum to 1");
}

LabelDistribution LabelDistribution::normalized(std::vector<double> weights) {
    const double total = sum_of(weights);
    if (!(total > 0.0) || !std::isfinite(total))
        throw InvalidParameter("cannot normalize weights with non-positive total");
    for (double& w : weights) w /= total;
    return LabelDistribution(std::move(weights));
}

LabelDistribution LabelDistribution::uniform(std::size_t classes) {
    return LabelDistribution(std::vector<double>(classes, 1.0 / static_cast<double>(classes)));
}

LabelDistribution LabelDistribution::clamped(double floor) const {
    std::vector<double> out = probs_;
    for (double& p : out) p = std::max(p, floor);
    return normalized(std::move(out));
}

LabelDistribution LabelDistribution::reversed() const {
    std::vector<double> out(probs_.rbegin(), probs_.rend());
    return LabelDistribution(std::move(out));
}

// ---------------------------------------------------------------------------
// Components and meta-distribution

std::string to_string(ComponentLabel label) {
    switch (label) {
        case ComponentLabel::Forward: return "forward";
        case ComponentLabel::Uniform: return "uniform";
        case ComponentLabel::Backward: return "backward";
        case ComponentLabel::Custom: return "custom";
    }
    return "custom";
}

ComponentLabel component_label_from_string(const std::string& name) {
    if (name == "forward") return ComponentLabel::Forward;
    if (name == "uniform") return ComponentLabel::Uniform;
    if (name == "backward") return ComponentLabel::Backward;
    if (name == "custom") return ComponentLabel::Custom;
    throw InvalidParameter("unknown component label: " + name);
}

DirichletComponent::DirichletComponent(std::vector<double> alpha, ComponentLabel label)
    : alpha_(std::move(alpha)), label_(label) {
    if (alpha_.size() < 2) throw InvalidParameter("Dirichlet component needs at least 2 classes");
    for (double a : alpha_) {
        if (!std::isfinite(a) || !(a > 0.0))
            throw InvalidParameter("Dirichlet concentration entries must be positive");
    }
}

double DirichletComponent::concentration() const { return sum_of(alpha_); }

MetaDistribution::MetaDistribution(std::vector<DirichletComponent> components,
                                   std::vector<double> mix)
    : components_(std::move(components)), mix_(std::move(mix)) {
    if (components_.empty()) throw InvalidParameter("meta-distribution needs at least one component");
    if (mix_.size() != components_.size())
        throw InvalidParameter("mixing weights must match the component count");
    const std::size_t classes = components_.front().size();
    for (const auto& c : components_) {
        if (c.size() != classes) throw InvalidParameter("components disagree on class count");
    }
    for (double p : mix_) {
        if (!std::isfinite(p) || p < 0.0) throw InvalidParameter("mixing weights must be non-negative");
    }
    if (std::fabs(sum_of(mix_) - 1.0) > kSimplexTolerance)
        throw InvalidParameter("mixing weights must sum to 1");
}

// ---------------------------------------------------------------------------
// Sampling

double sample_gamma(double shape, Rng& rng) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw InvalidParameter("gamma shape must be positive");
    if (shape < 1.0) {
        const double boosted = sample_gamma(shape + 1.0, rng);
        return boosted * std::pow(rng.uniform_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform_open();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double sample_log_gamma(double shape, Rng& rng) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw InvalidParameter("gamma shape must be positive");
    if (shape >= 1.0) return std::log(sample_gamma(shape, rng));
    const double boosted = sample_gamma(shape + 1.0, rng);
    return std::log(boosted) + std::log(rng.uniform_open()) / shape;
}

LabelDistribution sample_dirichlet(const DirichletComponent& comp, Rng& rng) {
    const auto& alpha = comp.alpha();
    std::vector<double> draws(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) draws[i] = sample_log_gamma(alpha[i], rng);
    const double top = *std::max_element(draws.begin(), draws.end());
    for (double& v : draws) v = std::exp(v - top);
    return LabelDistribution::normalized(std::move(draws)).clamped(kProbabilityFloor);
}

SampledPair sample_meta(const MetaDistribution& meta, Rng& rng) {
    const auto& mix = meta.mix();
    std::size_t index = mix.size() - 1;
    if (mix.size() > 1) {
        const double u = rng.uniform();
        double cumulative = 0.0;
        for (std::size_t k = 0; k < mix.size(); ++k) {
            cumulative += mix[k];
            if (u < cumulative) {
                index = k;
                break;
            }
        }
        // Rounding can leave u >= cumulative; fall back to the last component with mass.
        while (mix[index] == 0.0 && index > 0) --index;
    }
    return {sample_dirichlet(meta.components()[index], rng), index};
}

// ---------------------------------------------------------------------------
// Component construction

MetaDistribution build_training_components(const LabelDistribution& train_prior, double concentration) {
    if (!(concentration > 0.0) || !std::isfinite(concentration))
        throw InvalidParameter("concentration S must be positive");
    const std::size_t classes = train_prior.size();

    std::vector<std::size_t> order(classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return train_prior[a] > train_prior[b]; });

    std::vector<double> forward(classes), backward(classes);
    std::vector<double> uniform(classes, concentration / static_cast<double>(classes));
    for (std::size_t i = 0; i < classes; ++i) forward[i] = concentration * train_prior[i];
    for (std::size_t rank = 0; rank < classes; ++rank)
        backward[order[rank]] = concentration * train_prior[order[classes - 1 - rank]];

    // Zero-probability classes would give alpha = 0; lift them to the floor.
    const double min_alpha = concentration * kProbabilityFloor;
    for (auto* v : {&forward, &backward})
        for (double& a : *v) a = std::max(a, min_alpha);

    std::vector<DirichletComponent> comps;
    comps.emplace_back(std::move(forward), ComponentLabel::Forward);
    comps.emplace_back(std::move(uniform), ComponentLabel::Uniform);
    comps.emplace_back(std::move(backward), ComponentLabel::Backward);
    return MetaDistribution(std::move(comps), {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
}

std::vector<double> test_component_profile(std::size_t classes, double rho, ShiftKind kind) {
    if (classes < 2) throw InvalidParameter("need at least 2 classes");
    if (!(rho >= 1.0) || !std::isfinite(rho)) throw InvalidParameter("imbalance ratio must be >= 1");
    std::vector<double> profile(classes);
    const double span = static_cast<double>(classes - 1);
    for (std::size_t i = 0; i < classes; ++i) {
        const double idx = static_cast<double>(i);
        switch (kind) {
            case ShiftKind::Forward: profile[i] = std::pow(rho, -idx / span); break;
            case ShiftKind::Backward: profile[i] = std::pow(rho, -(span - idx) / span); break;
            case ShiftKind::Uniform: profile[i] = 1.0 / static_cast<double>(classes); break;
        }
    }
    return profile;
}

DirichletComponent build_test_component(std::size_t classes, double rho, ShiftKind kind,
                                        double concentration) {
    if (!(concentration > 0.0)) throw InvalidParameter("concentration S must be positive");
    auto profile = test_component_profile(classes, rho, kind);
    const double total = sum_of(profile);
    for (double& a : profile) a *= concentration / total;
    return DirichletComponent(std::move(profile), label_for(kind));
}

DirichletComponent perturb_and_normalize(const DirichletComponent& comp, double concentration, Rng& rng) {
    if (!(concentration > 0.0)) throw InvalidParameter("concentration S must be positive");
    std::vector<double> alpha = comp.alpha();
    for (double& a : alpha) a *= 1.0 + rng.uniform(-0.05, 0.05);
    const double total = sum_of(alpha);
    for (double& a : alpha) a *= concentration / total;
    return DirichletComponent(std::move(alpha), comp.label());
}

LabelDistribution dirichlet_mean(const DirichletComponent& comp) {
    return LabelDistribution::normalized(comp.alpha());
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const LabelDistribution& dist) { j = {{"probs", dist.probs()}}; }

void from_json(const nlohmann::json& j, LabelDistribution& dist) {
    dist = LabelDistribution(j.at("probs").get<std::vector<double>>());
}

void to_json(nlohmann::json& j, const DirichletComponent& comp) {
    j = {{"C", comp.size()}, {"alpha", comp.alpha()}, {"label", to_string(comp.label())}};
}

void from_json(const nlohmann::json& j, DirichletComponent& comp) {
    auto alpha = j.at("alpha").get<std::vector<double>>();
    if (j.contains("C") && j.at("C").get<std::size_t>() != alpha.size())
        throw InvalidParameter("component JSON: C disagrees with alpha length");
    comp = DirichletComponent(std::move(alpha), component_label_from_string(j.at("label").get<std::string>()));
}

}  // namespace dirmixe
