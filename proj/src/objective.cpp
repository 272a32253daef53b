#include "dirmixe/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dirmixe/error.hpp"

namespace dirmixe {

namespace {

void check_inputs(std::span<const double> logits, std::size_t y, const AdjustmentVector& adj) {
    if (logits.size() != adj.log_q.size()) throw ContractViolation("LA loss: logits/adjustment length mismatch");
    if (y >= logits.size()) throw ContractViolation("LA loss: label out of range");
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (!std::isfinite(logits[c]) || !std::isfinite(adj.log_q[c]))
            throw ContractViolation("LA loss: non-finite input");
    }
}

struct AdjustedSoftmax {
    std::vector<double> probs;
    double log_normalizer;  // log Σ exp(z_c), z = logits - log_q
};

AdjustedSoftmax adjusted_softmax(std::span<const double> logits, const std::vector<double>& log_q) {
    const std::size_t n = logits.size();
    std::vector<double> z(n);
    for (std::size_t c = 0; c < n; ++c) z[c] = logits[c] - log_q[c];
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : z) v /= total;
    return {std::move(z), top + std::log(total)};
}

}  // namespace

AdjustmentVector AdjustmentVector::between(const LabelDistribution& target, const LabelDistribution& train) {
    if (target.size() != train.size()) throw ContractViolation("adjustment: class count mismatch");
    const auto t = target.clamped();
    const auto s = train.clamped();
    AdjustmentVector adj;
    adj.log_q.resize(t.size());
    for (std::size_t c = 0; c < t.size(); ++c) adj.log_q[c] = std::log(t[c]) - std::log(s[c]);
    return adj;
}

std::vector<double> softmax(std::span<const double> z) {
    return adjusted_softmax(z, std::vector<double>(z.size(), 0.0)).probs;
}

double la_loss(std::span<const double> logits, std::size_t y, const AdjustmentVector& adj) {
    check_inputs(logits, y, adj);
    const auto sm = adjusted_softmax(logits, adj.log_q);
    return std::max(0.0, sm.log_normalizer - (logits[y] - adj.log_q[y]));
}

std::vector<double> la_loss_grad_logits(std::span<const double> logits, std::size_t y, const AdjustmentVector& adj) {
    check_inputs(logits, y, adj);
    auto grad = adjusted_softmax(logits, adj.log_q).probs;
    grad[y] -= 1.0;
    return grad;
}

namespace {

struct PairwiseLosses {
    PoolLosses losses;
    std::vector<AdjustmentVector> adjustments;
};

PairwiseLosses compute_pool_losses(const ExpertLogits& logits, const Dataset& batch,
                                   std::span<const SampledPair> pool_subset, const LabelDistribution& train_prior) {
    if (pool_subset.empty()) throw ContractViolation("pool subset must be non-empty");
    if (batch.size() == 0) throw ContractViolation("batch must be non-empty");
    PairwiseLosses out;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& pair : pool_subset) {
        if (pair.component_index >= logits.num_experts)
            throw ContractViolation("sampled pair refers to a missing expert");
        auto adj = AdjustmentVector::between(pair.dist, train_prior);
        double total = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b)
            total += la_loss(logits.row(b, pair.component_index), static_cast<std::size_t>(batch.labels[b]), adj);
        out.losses.values.push_back(total * inv_b);
        out.losses.component_of.push_back(pair.component_index);
        out.adjustments.push_back(std::move(adj));
    }
    return out;
}

}  // namespace

PoolLosses pool_losses(const MoeParams& params, const MoeArchitecture& arch, const Dataset& batch,
                       std::span<const SampledPair> pool_subset, const LabelDistribution& train_prior) {
    const auto logits = forward(params, arch, batch.features);
    return compute_pool_losses(logits, batch, pool_subset, train_prior).losses;
}

namespace {

// Mean taken relative to the first value, so a constant vector returns that value exactly.
double shifted_mean(std::span<const double> values) {
    const double base = values.front();
    double acc = 0.0;
    for (double v : values) acc += v - base;
    return base + acc / static_cast<double>(values.size());
}

}  // namespace

MeanSemivariance mean_and_semivariance(std::span<const double> values) {
    if (values.empty()) throw ContractViolation("mean/semivariance of an empty set");
    const double m = shifted_mean(values);
    double sv = 0.0;
    for (double v : values) {
        const double excess = v - m;
        if (excess > 0.0) sv += excess * excess;
    }
    return {m, sv / static_cast<double>(values.size())};
}

MeanSemivariance mean_and_semivariance(const PoolLosses& pl) { return mean_and_semivariance(pl.values); }

double population_variance(std::span<const double> values) {
    if (values.empty()) throw ContractViolation("variance of an empty set");
    const double m = shifted_mean(values);
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return acc / static_cast<double>(values.size());
}

double combined_objective(const PoolLosses& pl, double lambda) {
    if (!(lambda >= 0.0)) throw InvalidParameter("lambda must be non-negative");
    const auto ms = mean_and_semivariance(pl);
    return ms.mean + lambda * ms.semivar;
}

std::vector<double> objective_loss_weights(std::span<const double> values, double lambda, HingeMean mode) {
    if (!(lambda >= 0.0)) throw InvalidParameter("lambda must be non-negative");
    const auto ms = mean_and_semivariance(values);
    const double inv_m = 1.0 / static_cast<double>(values.size());
    std::vector<double> hinge(values.size());
    double hinge_mean = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
        hinge[j] = std::max(0.0, values[j] - ms.mean);
        hinge_mean += hinge[j];
    }
    hinge_mean *= inv_m;
    if (mode == HingeMean::StopGradient) hinge_mean = 0.0;
    std::vector<double> weights(values.size());
    for (std::size_t j = 0; j < values.size(); ++j)
        weights[j] = inv_m + 2.0 * lambda * inv_m * (hinge[j] - hinge_mean);
    return weights;
}

ObjectiveGradient objective_grad(const MoeParams& params, const MoeArchitecture& arch, const Dataset& batch,
                                 std::span<const SampledPair> pool_subset, const LabelDistribution& train_prior,
                                 double lambda, HingeMean mode) {
    ForwardTrace trace;
    const auto logits = forward(params, arch, batch.features, &trace);
    auto pairwise = compute_pool_losses(logits, batch, pool_subset, train_prior);

    ObjectiveGradient out;
    const auto ms = mean_and_semivariance(pairwise.losses);
    out.mean = ms.mean;
    out.semivar = ms.semivar;
    out.objective = ms.mean + lambda * ms.semivar;

    const auto weights = objective_loss_weights(pairwise.losses.values, lambda, mode);
    ExpertLogits grad_logits = logits;
    std::fill(grad_logits.values.begin(), grad_logits.values.end(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t j = 0; j < pool_subset.size(); ++j) {
        const std::size_t k = pool_subset[j].component_index;
        const double scale = weights[j] * inv_b;
        const auto& log_q = pairwise.adjustments[j].log_q;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto sm = adjusted_softmax(logits.row(b, k), log_q);
            auto dst = grad_logits.row(b, k);
            const auto y = static_cast<std::size_t>(batch.labels[b]);
            for (std::size_t c = 0; c < dst.size(); ++c)
                dst[c] += scale * (sm.probs[c] - (c == y ? 1.0 : 0.0));
        }
    }
    out.grad = backward(params, arch, trace, grad_logits);
    out.losses = std::move(pairwise.losses);
    return out;
}

}  // namespace dirmixe
