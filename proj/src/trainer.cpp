#include "dirmixe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dirmixe/error.hpp"

namespace dirmixe {

namespace {


}  // namespace

double LrSchedule::rate_at(int epoch, int total_epochs, double base_lr) const {
    switch (kind) {
        case ScheduleKind::Constant: return base_lr;
        case ScheduleKind::Cosine:
            return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / std::max(total_epochs, 1)));
        case ScheduleKind::Step: {
            std::vector<int> marks = milestones;
            if (marks.empty()) marks = {total_epochs * 8 / 10, total_epochs * 9 / 10};
            const auto passed = std::count_if(marks.begin(), marks.end(), [&](int m) { return epoch >= m; });
            return base_lr * std::pow(factor, static_cast<double>(passed));
        }
    }
    return base_lr;
}

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Step: return "step";
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::Constant: return "constant";
    }
    return "step";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "step") return ScheduleKind::Step;
    if (name == "cosine") return ScheduleKind::Cosine;
    if (name == "constant") return ScheduleKind::Constant;
    throw ConfigError("unknown lr schedule: " + name);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (pool_per_batch < 1) throw ConfigError("train.pool_per_batch must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must be in [0, 1)");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train.lambda must be >= 0");
    if (!(s_train > 0.0)) throw ConfigError("train.S_train must be positive");
    if (!(lr_schedule.factor > 0.0)) throw ConfigError("train.lr_schedule.factor must be positive");
    if (!(max_grad_norm >= 0.0) || !std::isfinite(max_grad_norm))
        throw ConfigError("train.max_grad_norm must be >= 0");
}

DistributionPool build_pool(const MetaDistribution& meta, std::size_t batches_per_epoch, std::size_t pool_per_batch,
                            Rng& rng) {
    if (batches_per_epoch == 0 || pool_per_batch == 0) throw InvalidParameter("pool sizes must be positive");
    DistributionPool pool;
    const std::size_t total = batches_per_epoch * pool_per_batch;
    pool.pairs.reserve(total);
    for (std::size_t j = 0; j < total; ++j) pool.pairs.push_back(sample_meta(meta, rng));
    return pool;
}

std::vector<std::vector<SampledPair>> epoch_pool_partition(const DistributionPool& pool,
                                                           std::size_t batches_per_epoch, Rng& rng) {
    if (batches_per_epoch == 0 || pool.pairs.size() % batches_per_epoch != 0)
        throw ConfigError("pool size is not divisible by the number of batches");
    std::vector<std::size_t> order(pool.pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t per = pool.pairs.size() / batches_per_epoch;
    std::vector<std::vector<SampledPair>> subsets(batches_per_epoch);
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
        subsets[b].reserve(per);
        for (std::size_t i = 0; i < per; ++i) subsets[b].push_back(pool.pairs[order[b * per + i]]);
    }
    return subsets;
}

void sgd_step(TrainState& state, const MoeParams& grad, double lr, double momentum) {
    state.velocity.scale(momentum);
    state.velocity.axpy(1.0, grad);
    state.params.axpy(-lr, state.velocity);
}

MetaDistribution training_meta_for(const LabelDistribution& train_prior, std::size_t num_experts,
                                   double concentration) {
    if (num_experts == 0) throw ConfigError("K must be >= 1");
    const std::size_t classes = train_prior.size();
    auto standard = build_training_components(train_prior, concentration);
    if (num_experts == 3) return standard;
    if (num_experts == 1)
        return MetaDistribution({standard.components()[1]}, {1.0});

    const auto& forward = standard.components()[0].alpha();
    const auto& backward = standard.components()[2].alpha();
    std::vector<DirichletComponent> comps;
    for (std::size_t k = 0; k < num_experts; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(num_experts - 1);
        std::vector<double> alpha(classes);
        for (std::size_t c = 0; c < classes; ++c)
            alpha[c] = std::exp((1.0 - t) * std::log(forward[c]) + t * std::log(backward[c]));
        const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
        for (double& a : alpha) a *= concentration / total;
        const auto label = k == 0 ? ComponentLabel::Forward
                                  : (k + 1 == num_experts ? ComponentLabel::Backward : ComponentLabel::Custom);
        comps.emplace_back(std::move(alpha), label);
    }
    return MetaDistribution(std::move(comps), std::vector<double>(num_experts, 1.0 / static_cast<double>(num_experts)));
}

TrainState train(const Dataset& dataset, const MoeArchitecture& arch, const TrainConfig& cfg,
                 const MetaDistribution& meta, const EpochCallback& on_epoch) {
    cfg.validate();
    arch.validate();
    if (dataset.size() == 0) throw ConfigError("training set is empty");
    if (dataset.num_classes != arch.num_classes || meta.num_classes() != arch.num_classes)
        throw ConfigError("dataset, architecture and meta-distribution disagree on C");
    if (dataset.dim() != arch.d_in) throw ConfigError("dataset feature width does not match d_in");
    if (meta.num_components() != arch.num_experts)
        throw ConfigError("meta-distribution component count must equal the expert count");

    const auto train_prior = empirical_prior(dataset);
    const std::size_t n = dataset.size();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;

    Rng pool_rng = Rng::stream(cfg.seed, kPoolStream);
    Rng shuffle_rng = Rng::stream(cfg.seed, kShuffleStream);
    Rng partition_rng = Rng::stream(cfg.seed, kPartitionStream);
    const auto pool = build_pool(meta, batches, cfg.pool_per_batch, pool_rng);

    TrainState state;
    state.params = init_params(arch, Rng::stream(cfg.seed, kInitStream).next_u64());
    state.velocity = state.params.zeros_like();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_schedule.rate_at(epoch, cfg.epochs, cfg.lr);
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        const auto subsets = epoch_pool_partition(pool, batches, partition_rng);

        EpochRecord record;
        record.epoch = epoch;
        record.lr = lr;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const auto batch = subset(dataset, std::span<const std::size_t>(order).subspan(begin, end - begin));
            ObjectiveGradient step;
            try {
                step = objective_grad(state.params, arch, batch, subsets[b], train_prior, cfg.lambda, cfg.hinge_mean);
            } catch (const ContractViolation& e) {
                std::ostringstream msg;
                msg << "non-finite logits at epoch " << epoch << ", batch " << b << " (lr " << lr << "): " << e.what();
                throw NumericalAbort(msg.str(), lr, 0);
            }

            if (!std::isfinite(step.objective) || !step.grad.all_finite()) {
                std::size_t offending = 0;
                while (offending + 1 < step.losses.values.size() && std::isfinite(step.losses.values[offending]))
                    ++offending;
                std::ostringstream msg;
                msg << "non-finite objective at epoch " << epoch << ", batch " << b << " (lr " << lr
                    << ", pair " << offending << ")";
                throw NumericalAbort(msg.str(), lr, offending);
            }
            if (cfg.max_grad_norm > 0.0) {
                const auto flat = step.grad.flatten();
                const double norm = std::sqrt(std::inner_product(flat.begin(), flat.end(), flat.begin(), 0.0));
                if (norm > cfg.max_grad_norm) step.grad.scale(cfg.max_grad_norm / norm);
            }
            record.mean += step.mean;
            record.semivar += step.semivar;
            record.objective += step.objective;
            sgd_step(state, step.grad, lr, cfg.momentum);
        }
        const double inv = 1.0 / static_cast<double>(batches);
        record.mean *= inv;
        record.semivar *= inv;
        record.objective *= inv;
        state.epoch = epoch + 1;
        state.history.push_back(record);
        if (on_epoch) on_epoch(record);
    }
    if (!state.params.all_finite()) throw NumericalAbort("parameters became non-finite", cfg.lr, 0);
    return state;
}

}  // namespace dirmixe
