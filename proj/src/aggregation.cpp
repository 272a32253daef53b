#include "dirmixe/aggregation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "dirmixe/error.hpp"
#include "dirmixe/objective.hpp"

namespace dirmixe {

namespace {

void check_weights(const AggregationWeights& w, std::size_t experts) {
    if (w.omega.size() != experts) throw ContractViolation("aggregation weights do not match the expert count");
    double total = 0.0;
    for (double v : w.omega) {
        if (!(v >= 0.0)) throw ContractViolation("aggregation weights must be non-negative");
        total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ContractViolation("aggregation weights must sum to 1");
}

// Per-row combination of per-expert output matrices (n x C).
void mix_rows(const std::vector<Matrix>& outputs, const std::vector<double>& omega, MixSpace space,
              std::size_t row, std::vector<double>& out) {
    const std::size_t classes = outputs.front().cols;
    out.assign(classes, 0.0);
    for (std::size_t k = 0; k < outputs.size(); ++k) {
        const auto src = outputs[k].row(row);
        for (std::size_t c = 0; c < classes; ++c) out[c] += omega[k] * src[c];
    }
    if (space == MixSpace::Logit) out = softmax(out);
}

std::vector<Matrix> expert_outputs(const ExpertLogits& logits, MixSpace space) {
    std::vector<Matrix> outputs(logits.num_experts, Matrix(logits.batch, logits.num_classes));
    for (std::size_t b = 0; b < logits.batch; ++b) {
        for (std::size_t k = 0; k < logits.num_experts; ++k) {
            const auto row = logits.row(b, k);
            auto dst = outputs[k].row(b);
            if (space == MixSpace::Probability) {
                const auto p = softmax(row);
                std::copy(p.begin(), p.end(), dst.begin());
            } else {
                std::copy(row.begin(), row.end(), dst.begin());
            }
        }
    }
    return outputs;
}

double norm2(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

AggregationWeights AggregationWeights::uniform(std::size_t experts) {
    if (experts == 0) throw InvalidParameter("need at least one expert");
    return {std::vector<double>(experts, 1.0 / static_cast<double>(experts))};
}

AggregationWeights AggregationWeights::one_hot(std::size_t experts, std::size_t index) {
    if (index >= experts) throw InvalidParameter("one_hot index out of range");
    std::vector<double> w(experts, 0.0);
    w[index] = 1.0;
    return {std::move(w)};
}

std::string to_string(MixSpace space) { return space == MixSpace::Probability ? "probability" : "logit"; }

MixSpace mix_space_from_string(const std::string& name) {
    if (name == "probability") return MixSpace::Probability;
    if (name == "logit") return MixSpace::Logit;
    throw ConfigError("unknown mix space: " + name);
}

Matrix aggregate_logits(const ExpertLogits& logits, const AggregationWeights& omega, MixSpace space) {
    check_weights(omega, logits.num_experts);
    Matrix out(logits.batch, logits.num_classes);
    for (std::size_t b = 0; b < logits.batch; ++b) {
        auto dst = out.row(b);
        for (std::size_t k = 0; k < logits.num_experts; ++k) {
            if (omega.omega[k] == 0.0) continue;
            const auto row = logits.row(b, k);
            if (space == MixSpace::Probability) {
                const auto p = softmax(row);
                for (std::size_t c = 0; c < p.size(); ++c) dst[c] += omega.omega[k] * p[c];
            } else {
                for (std::size_t c = 0; c < row.size(); ++c) dst[c] += omega.omega[k] * row[c];
            }
        }
        if (space == MixSpace::Probability) {
            const double total = std::accumulate(dst.begin(), dst.end(), 0.0);
            for (double& v : dst) v /= total;
        }
    }
    return out;
}

double feature_std(const Matrix& features) {
    if (features.rows < 2) return 1.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < features.cols; ++k) {
        double mean = 0.0;
        for (std::size_t r = 0; r < features.rows; ++r) mean += features(r, k);
        mean /= static_cast<double>(features.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < features.rows; ++r) var += (features(r, k) - mean) * (features(r, k) - mean);
        acc += std::sqrt(var / static_cast<double>(features.rows));
    }
    return acc / static_cast<double>(features.cols);
}

namespace {

// Objective and its gradient w.r.t. ω.
double stability_and_gradient(const NoisyViews& views, const std::vector<double>& omega, MixSpace space,
                              std::vector<double>* grad) {
    const std::size_t experts = views.first.size();
    const std::size_t n = views.first.front().rows;
    const std::size_t classes = views.first.front().cols;
    if (grad) grad->assign(experts, 0.0);
    std::vector<double> p, q, dp(classes), dq(classes);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        mix_rows(views.first, omega, space, r, p);
        mix_rows(views.second, omega, space, r, q);
        const double np = norm2(p), nq = norm2(q);
        const double dot = std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
        const double cosine = dot / (np * nq);
        total += cosine;
        if (!grad) continue;
        for (std::size_t c = 0; c < classes; ++c) {
            dp[c] = q[c] / (np * nq) - cosine * p[c] / (np * np);
            dq[c] = p[c] / (np * nq) - cosine * q[c] / (nq * nq);
        }
        if (space == MixSpace::Logit) {
            // Chain through softmax: J^T v = s ⊙ (v - s·v).
            const double sp = std::inner_product(p.begin(), p.end(), dp.begin(), 0.0);
            const double sq = std::inner_product(q.begin(), q.end(), dq.begin(), 0.0);
            for (std::size_t c = 0; c < classes; ++c) {
                dp[c] = p[c] * (dp[c] - sp);
                dq[c] = q[c] * (dq[c] - sq);
            }
        }
        for (std::size_t k = 0; k < experts; ++k) {
            const auto a = views.first[k].row(r);
            const auto b = views.second[k].row(r);
            double g = 0.0;
            for (std::size_t c = 0; c < classes; ++c) g += dp[c] * a[c] + dq[c] * b[c];
            (*grad)[k] += g;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    if (grad)
        for (double& g : *grad) g *= inv;
    return total * inv;
}

}  // namespace

NoisyViews make_noisy_views(const MoeParams& params, const MoeArchitecture& arch, const Matrix& features,
                            double noise_sigma, Rng& rng) {
    return make_noisy_views_in(params, arch, features, noise_sigma, rng, MixSpace::Probability);
}

NoisyViews make_noisy_views_in(const MoeParams& params, const MoeArchitecture& arch, const Matrix& features,
                               double noise_sigma, Rng& rng, MixSpace space) {
    if (features.rows == 0) throw ContractViolation("weight learning needs a non-empty view");
    NoisyViews views;
    for (auto* target : {&views.first, &views.second}) {
        Matrix noisy = features;
        for (double& v : noisy.data) v += noise_sigma * rng.normal();
        *target = expert_outputs(forward(params, arch, noisy), space);
    }
    return views;
}

double stability_objective(const NoisyViews& views, const std::vector<double>& omega, MixSpace space) {
    return stability_and_gradient(views, omega, space, nullptr);
}

std::vector<double> stability_gradient(const NoisyViews& views, const std::vector<double>& omega, MixSpace space) {
    std::vector<double> grad;
    stability_and_gradient(views, omega, space, &grad);
    return grad;
}

AggregationWeights learn_weights(const MoeParams& params, const MoeArchitecture& arch, const Matrix& features,
                                 const WeightLearningConfig& cfg) {
    const std::size_t experts = arch.num_experts;
    if (experts == 1) return AggregationWeights::uniform(1);
    Rng rng(cfg.seed);
    const double sigma = cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 0.1 * feature_std(features);
    const auto views = make_noisy_views_in(params, arch, features, sigma, rng, cfg.space);

    std::vector<double> free(experts, 0.0), grad;
    for (int step = 0; step < cfg.steps; ++step) {
        const auto omega = softmax(free);
        stability_and_gradient(views, omega, cfg.space, &grad);
        const double avg = std::inner_product(omega.begin(), omega.end(), grad.begin(), 0.0);
        for (std::size_t k = 0; k < experts; ++k) free[k] += cfg.lr * omega[k] * (grad[k] - avg);
    }
    return {softmax(free)};
}

ClassGroups ClassGroups::from_counts(const std::vector<std::size_t>& counts, std::size_t many_above,
                                     std::size_t few_below) {
    ClassGroups groups;
    for (std::size_t c : counts) groups.group_of.push_back(c > many_above ? 0 : (c < few_below ? 2 : 1));
    return groups;
}

EntryEvaluation evaluate_entry(const MoeParams& params, const MoeArchitecture& arch, const TestEntry& entry,
                               const AggregationWeights& weights, const ClassGroups& groups, MixSpace space) {
    const auto logits = forward(params, arch, entry.dataset.features);
    const auto mixed = aggregate_logits(logits, weights, space);
    std::array<std::size_t, 3> hits{}, totals{};
    std::size_t correct = 0;
    for (std::size_t b = 0; b < entry.dataset.size(); ++b) {
        const auto y = static_cast<std::size_t>(entry.dataset.labels[b]);
        const bool ok = predict_expert(mixed.row(b)) == y;
        correct += ok;
        if (y < groups.group_of.size()) {
            const auto g = static_cast<std::size_t>(groups.group_of[y]);
            ++totals[g];
            hits[g] += ok;
        }
    }
    auto ratio = [](std::size_t a, std::size_t b) {
        return b == 0 ? std::nan("") : static_cast<double>(a) / static_cast<double>(b);
    };
    EntryEvaluation out;
    out.name = entry.name;
    out.accuracy = ratio(correct, entry.dataset.size());
    out.acc_many = ratio(hits[0], totals[0]);
    out.acc_medium = ratio(hits[1], totals[1]);
    out.acc_few = ratio(hits[2], totals[2]);
    out.omega = weights.omega;
    return out;
}

EvaluationTable evaluate(const MoeParams& params, const MoeArchitecture& arch, const TestSuite& suite,
                         const std::vector<AggregationWeights>& weights_per_entry, const ClassGroups& groups,
                         MixSpace space) {
    if (weights_per_entry.size() != suite.entries.size())
        throw ContractViolation("evaluate: one weight vector per test entry is required");
    EvaluationTable table;
    for (std::size_t e = 0; e < suite.entries.size(); ++e)
        table.entries.push_back(evaluate_entry(params, arch, suite.entries[e], weights_per_entry[e], groups, space));
    if (!table.entries.empty()) {
        double sum = 0.0;
        for (const auto& e : table.entries) sum += e.accuracy;
        table.mean_accuracy = sum / static_cast<double>(table.entries.size());
        double sq = 0.0;
        for (const auto& e : table.entries) sq += (e.accuracy - table.mean_accuracy) * (e.accuracy - table.mean_accuracy);
        table.std_accuracy = std::sqrt(sq / static_cast<double>(table.entries.size()));
    }
    return table;
}

std::vector<double> per_expert_losses(const MoeParams& params, const MoeArchitecture& arch, const Dataset& ds) {
    const auto logits = forward(params, arch, ds.features);
    const auto zero = AdjustmentVector::zero(arch.num_classes);
    std::vector<double> losses(arch.num_experts, 0.0);
    for (std::size_t b = 0; b < ds.size(); ++b)
        for (std::size_t k = 0; k < arch.num_experts; ++k)
            losses[k] += la_loss(logits.row(b, k), static_cast<std::size_t>(ds.labels[b]), zero);
    for (double& l : losses) l /= static_cast<double>(ds.size());
    return losses;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw InvalidParameter("pearson: need two equal series of length >= 2");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    // Relative threshold: a series of identical floats can leave rounding residue.
    const double scale_a = std::max(1.0, ma * ma) * n, scale_b = std::max(1.0, mb * mb) * n;
    if (saa <= 1e-24 * scale_a || sbb <= 1e-24 * scale_b) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<std::optional<double>> weight_loss_correlation(
    const std::vector<AggregationWeights>& weights_per_entry,
    const std::vector<std::vector<double>>& per_expert_losses_per_entry) {
    const std::size_t entries = weights_per_entry.size();
    if (entries < 3) throw InvalidParameter("weight-loss correlation needs at least 3 entries");
    if (per_expert_losses_per_entry.size() != entries)
        throw InvalidParameter("weights and losses must cover the same entries");
    const std::size_t experts = weights_per_entry.front().omega.size();
    std::vector<std::optional<double>> out;
    for (std::size_t k = 0; k < experts; ++k) {
        std::vector<double> w(entries), l(entries);
        for (std::size_t e = 0; e < entries; ++e) {
            const auto& losses = per_expert_losses_per_entry[e];
            const double total = std::accumulate(losses.begin(), losses.end(), 0.0);
            w[e] = weights_per_entry[e].omega.at(k);
            l[e] = losses.at(k) / total;
        }
        out.push_back(pearson(w, l));
    }
    return out;
}

}  // namespace dirmixe
