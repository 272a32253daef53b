#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dirmixe/data_synth.hpp"
#include "dirmixe/moe_model.hpp"
#include "dirmixe/rng.hpp"
#include "dirmixe/simplex.hpp"

namespace dirmixe {

struct ExponentialTail {
    double rate = 1.0;
};

struct GammaTail {
    double shape = 1.0;
    double rate = 1.0;
};

/// Pareto with tail index theta and minimum value scale; theta > 2 for a finite variance.
struct ParetoTail {
    double theta = 3.0;
    double scale = 1.0;
};

using TailDistributionSpec = std::variant<ExponentialTail, GammaTail, ParetoTail>;

/// Throws InvalidParameter for non-positive parameters or Pareto theta <= 2.
void validate(const TailDistributionSpec& spec);
std::string kind_name(const TailDistributionSpec& spec);
/// Compact "key=value;key=value" rendering of the parameters.
std::string params_string(const TailDistributionSpec& spec);

double sample_tail(const TailDistributionSpec& spec, Rng& rng);

inline constexpr std::size_t kDefaultMonteCarloSamples = 10'000'000;
inline constexpr std::size_t kBatchCount = 100;
inline constexpr std::size_t kMinMonteCarloSamples = 10'000;

struct RhoReport {
    std::optional<double> rho_mc;  ///< nullopt when the sample variance is zero
    double rho_bound = 0.0;        ///< NaN when produced from raw samples
    std::size_t samples = 0;
    double ci_halfwidth = 0.0;  ///< one standard error of rho_mc from batch means
    double mean = 0.0;
    double variance = 0.0;
    double semivariance = 0.0;
};

/// Exponential: e^-1. Gamma: 1 - alpha * P(alpha, alpha), P the regularized
/// lower incomplete gamma. Pareto: the exact ratio 1 - pareto_printed_ratio(theta),
/// independent of the scale.
double rho_bound(const TailDistributionSpec& spec);

/// (theta-1)^2 [1 - phi^(2-theta)] + theta (theta-2) [2 phi^(1-theta) - phi^(-theta) - 1],
/// phi = theta/(theta-1). This is V_-/V of the Pareto law, the share below the mean.
double pareto_printed_ratio(double theta);

/// 1 - alpha * P(alpha, alpha) / Gamma(alpha): the reading that divides the
/// regularized function by Gamma(alpha) a second time.
double gamma_bound_double_normalized(double alpha);

/// Draws n samples twice from a cloned stream (mean pass, moment pass) so no
/// sample vector is held in memory. Throws InvalidParameter for n < 10^4.
RhoReport rho_monte_carlo(const TailDistributionSpec& spec, std::size_t n, Rng& rng);

/// Same statistics from a provided sample vector; rho_bound is NaN.
RhoReport rho_from_samples(std::span<const double> samples);

struct MixtureComponent {
    double weight = 0.0;
    TailDistributionSpec spec;
};

struct MixtureRhoResult {
    double rho_mix = 0.0;
    std::vector<double> rho_i;
    double sum_weighted_rho_i = 0.0;
    double variance_mix = 0.0;
    std::vector<double> sigma2_i;
    /// cross_lower[i][j] = E_j[((l - mu_i)_-)^2]; the diagonal is V_- of component i.
    std::vector<std::vector<double>> cross_lower;
    /// min over (i, j) of V/sigma_i^2 - max(V_-ij / V_-i, 1); >= 0 means the assumption holds.
    double assumption_margin = 0.0;
    bool assumptions_hold = false;
    /// One standard error of (sum_weighted_rho_i - rho_mix) from batch means.
    double ci_halfwidth = 0.0;
    /// rho_mix <= sum_weighted_rho_i + 3 ci; nullopt ("not applicable") unless the assumptions hold.
    std::optional<bool> holds;
};

/// Monte Carlo check of the mixture bound rho_mix <= sum_i w_i rho_i. Every
/// component is sampled n times from a copy of the same stream.
MixtureRhoResult mixture_rho_check(const std::vector<MixtureComponent>& components, std::size_t n, Rng& rng);

/// Semi-variance to variance ratio of the per-distribution LA losses of a
/// trained model over n_dists pairs drawn from meta. nullopt on zero variance.
std::optional<double> model_rho(const MoeParams& params, const MoeArchitecture& arch, const Dataset& dataset,
                                const MetaDistribution& meta, std::size_t n_dists, Rng& rng);

/// Same ratio over an explicit pair list.
std::optional<double> model_rho_for_pairs(const MoeParams& params, const MoeArchitecture& arch,
                                          const Dataset& dataset, std::span<const SampledPair> pairs);

}  // namespace dirmixe
