#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dirmixe/data_synth.hpp"
#include "dirmixe/moe_model.hpp"
#include "dirmixe/objective.hpp"
#include "dirmixe/rng.hpp"
#include "dirmixe/simplex.hpp"

namespace dirmixe {

/// Rng::stream ids train() derives from TrainConfig::seed.
enum TrainStream : std::uint64_t { kInitStream = 1, kPoolStream = 2, kShuffleStream = 3, kPartitionStream = 4 };

enum class ScheduleKind { Step, Cosine, Constant };

struct LrSchedule {
    ScheduleKind kind = ScheduleKind::Step;
    /// Epoch indices (0-based) at which the rate is multiplied by `factor`.
    /// Empty with Step: 80% and 90% of the run.
    std::vector<int> milestones;
    double factor = 0.1;

    double rate_at(int epoch, int total_epochs, double base_lr) const;
};

struct TrainConfig {
    int epochs = 60;
    std::size_t batch_size = 128;
    double lr = 0.1;
    double momentum = 0.9;
    LrSchedule lr_schedule;
    double lambda = 1.0;
    std::size_t pool_per_batch = 60;
    double s_train = kDefaultTrainConcentration;
    std::uint64_t seed = 0;
    HingeMean hinge_mean = HingeMean::Differentiated;
    /// Global l2 cap on each step's gradient before the momentum update; 0 disables.
    double max_grad_norm = 5.0;

    /// Throws ConfigError on any out-of-range field.
    void validate() const;
};

struct DistributionPool {
    std::vector<SampledPair> pairs;
};

struct EpochRecord {
    int epoch = 0;
    double mean = 0.0;
    double semivar = 0.0;
    double objective = 0.0;
    double lr = 0.0;
};

struct TrainState {
    MoeParams params;
    MoeParams velocity;
    int epoch = 0;
    std::vector<EpochRecord> history;
};

/// pool_per_batch * batches_per_epoch draws from the meta-distribution.
DistributionPool build_pool(const MetaDistribution& meta, std::size_t batches_per_epoch,
                            std::size_t pool_per_batch, Rng& rng);

/// A fresh random partition of the pool into `batches_per_epoch` equal subsets.
/// Throws ConfigError if the pool size is not divisible.
std::vector<std::vector<SampledPair>> epoch_pool_partition(const DistributionPool& pool,
                                                           std::size_t batches_per_epoch, Rng& rng);

/// velocity <- momentum * velocity + grad; params <- params - lr * velocity.
void sgd_step(TrainState& state, const MoeParams& grad, double lr, double momentum);

/// Training meta-distribution for K experts around a training prior.
///
/// K = 3: forward/uniform/backward components. K = 1: the uniform component.
/// Other K >= 2: log-linear interpolation from the forward profile (first) to
/// the backward profile (last), equal mixing weights.
MetaDistribution training_meta_for(const LabelDistribution& train_prior, std::size_t num_experts,
                                   double concentration);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch momentum SGD on mean + λ·semivariance of the per-distribution LA losses.
///
/// Each epoch shuffles the data into ceil(N / batch_size) batches and
/// repartitions the fixed pool; batch b is paired with pool subset b.
/// P_tr is the empirical prior of `dataset`. Throws NumericalAbort if the
/// objective or the parameters stop being finite.
TrainState train(const Dataset& dataset, const MoeArchitecture& arch, const TrainConfig& cfg,
                 const MetaDistribution& meta, const EpochCallback& on_epoch = {});

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

}  // namespace dirmixe
