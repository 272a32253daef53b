#include "dirmixe/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dirmixe/error.hpp"
#include "dirmixe/objective.hpp"
#include "dirmixe/special.hpp"

namespace dirmixe {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double standard_error(std::span<const double> batch_values) {
    const double m = mean_of(batch_values);
    double sq = 0.0;
    for (double x : batch_values) sq += (x - m) * (x - m);
    const double n = static_cast<double>(batch_values.size());
    return std::sqrt(sq / (n - 1.0) / n);
}

std::size_t batch_of(std::size_t index, std::size_t n, std::size_t batches) {
    return std::min(batches - 1, index * batches / n);
}

// Shared reduction for a stream of samples whose mean is already known.
struct CentralMoments {
    std::vector<double> var_sum, upper_sum;
    std::vector<std::size_t> count;

    explicit CentralMoments(std::size_t batches) : var_sum(batches), upper_sum(batches), count(batches) {}

    void add(std::size_t batch, double deviation) {
        var_sum[batch] += deviation * deviation;
        if (deviation > 0.0) upper_sum[batch] += deviation * deviation;
        ++count[batch];
    }

    RhoReport finish(double mean) const {
        RhoReport r;
        r.mean = mean;
        double v = 0.0, u = 0.0;
        std::size_t n = 0;
        for (std::size_t b = 0; b < count.size(); ++b) {
            v += var_sum[b];
            u += upper_sum[b];
            n += count[b];
        }
        r.samples = n;
        r.variance = v / static_cast<double>(n);
        r.semivariance = u / static_cast<double>(n);
        if (!(r.variance > 0.0)) return r;
        r.rho_mc = u / v;
        std::vector<double> ratios;
        for (std::size_t b = 0; b < count.size(); ++b)
            if (var_sum[b] > 0.0) ratios.push_back(upper_sum[b] / var_sum[b]);
        r.ci_halfwidth = ratios.size() >= 2 ? standard_error(ratios) : std::numeric_limits<double>::infinity();
        return r;
    }
};

}  // namespace

void validate(const TailDistributionSpec& spec) {
    std::visit(overloaded{
                   [](const ExponentialTail& e) {
                       if (!(e.rate > 0.0)) throw InvalidParameter("exponential rate must be positive");
                   },
                   [](const GammaTail& g) {
                       if (!(g.shape > 0.0) || !(g.rate > 0.0))
                           throw InvalidParameter("gamma shape and rate must be positive");
                   },
                   [](const ParetoTail& p) {
                       if (!(p.theta > 2.0)) throw InvalidParameter("pareto theta must exceed 2");
                       if (!(p.scale > 0.0)) throw InvalidParameter("pareto scale must be positive");
                   },
               },
               spec);
}

std::string kind_name(const TailDistributionSpec& spec) {
    return std::visit(overloaded{
                          [](const ExponentialTail&) { return std::string("exponential"); },
                          [](const GammaTail&) { return std::string("gamma"); },
                          [](const ParetoTail&) { return std::string("pareto"); },
                      },
                      spec);
}

std::string params_string(const TailDistributionSpec& spec) {
    return std::visit(overloaded{
                          [](const ExponentialTail& e) { return "rate=" + fmt(e.rate); },
                          [](const GammaTail& g) { return "alpha=" + fmt(g.shape) + ";beta=" + fmt(g.rate); },
                          [](const ParetoTail& p) { return "theta=" + fmt(p.theta) + ";l_m=" + fmt(p.scale); },
                      },
                      spec);
}

double sample_tail(const TailDistributionSpec& spec, Rng& rng) {
    return std::visit(overloaded{
                          [&](const ExponentialTail& e) { return -std::log(rng.uniform_open()) / e.rate; },
                          [&](const GammaTail& g) { return sample_gamma(g.shape, rng) / g.rate; },
                          [&](const ParetoTail& p) { return p.scale * std::pow(rng.uniform_open(), -1.0 / p.theta); },
                      },
                      spec);
}

double pareto_printed_ratio(double theta) {
    if (!(theta > 2.0)) throw InvalidParameter("pareto theta must exceed 2");
    const double phi = theta / (theta - 1.0);
    return (theta - 1.0) * (theta - 1.0) * (1.0 - std::pow(phi, 2.0 - theta)) +
           theta * (theta - 2.0) * (2.0 * std::pow(phi, 1.0 - theta) - std::pow(phi, -theta) - 1.0);
}

double gamma_bound_double_normalized(double alpha) {
    if (!(alpha > 0.0)) throw InvalidParameter("gamma shape must be positive");
    return 1.0 - alpha * lower_incomplete_gamma_regularized(alpha, alpha) / std::tgamma(alpha);
}

double rho_bound(const TailDistributionSpec& spec) {
    validate(spec);
    return std::visit(overloaded{
                          [](const ExponentialTail&) { return std::exp(-1.0); },
                          [](const GammaTail& g) {
                              return 1.0 - g.shape * lower_incomplete_gamma_regularized(g.shape, g.shape);
                          },
                          [](const ParetoTail& p) { return 1.0 - pareto_printed_ratio(p.theta); },
                      },
                      spec);
}

RhoReport rho_monte_carlo(const TailDistributionSpec& spec, std::size_t n, Rng& rng) {
    validate(spec);
    if (n < kMinMonteCarloSamples) throw InvalidParameter("rho_monte_carlo needs at least 10^4 samples");
    Rng replay = rng;
    // Batch sums keep the fold order fixed and limit rounding growth.
    std::vector<double> sums(kBatchCount, 0.0);
    for (std::size_t i = 0; i < n; ++i) sums[batch_of(i, n, kBatchCount)] += sample_tail(spec, rng);
    double total = 0.0;
    for (double s : sums) total += s;
    const double mean = total / static_cast<double>(n);

    CentralMoments acc(kBatchCount);
    for (std::size_t i = 0; i < n; ++i) acc.add(batch_of(i, n, kBatchCount), sample_tail(spec, replay) - mean);
    RhoReport r = acc.finish(mean);
    r.rho_bound = rho_bound(spec);
    return r;
}

RhoReport rho_from_samples(std::span<const double> samples) {
    if (samples.size() < 2) throw InvalidParameter("rho_from_samples needs at least two samples");
    const std::size_t batches = std::min(kBatchCount, samples.size());
    const double mean = mean_of(samples);
    CentralMoments acc(batches);
    for (std::size_t i = 0; i < samples.size(); ++i)
        acc.add(batch_of(i, samples.size(), batches), samples[i] - mean);
    RhoReport r = acc.finish(mean);
    r.rho_bound = std::nan("");
    return r;
}

MixtureRhoResult mixture_rho_check(const std::vector<MixtureComponent>& components, std::size_t n, Rng& rng) {
    const std::size_t k = components.size();
    if (k < 2) throw InvalidParameter("mixture_rho_check needs at least two components");
    if (n < kMinMonteCarloSamples) throw InvalidParameter("mixture_rho_check needs at least 10^4 samples");
    double wsum = 0.0;
    for (const auto& c : components) {
        validate(c.spec);
        if (!(c.weight >= 0.0)) throw InvalidParameter("mixture weights must be non-negative");
        wsum += c.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) throw InvalidParameter("mixture weights must sum to 1");

    const std::size_t nb = kBatchCount;
    // Every component replays the same stream (common random numbers).
    const Rng base = rng.split();

    std::vector<double> mu(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        Rng r = base;
        std::vector<double> sums(nb, 0.0);
        for (std::size_t s = 0; s < n; ++s) sums[batch_of(s, n, nb)] += sample_tail(components[j].spec, r);
        for (double v : sums) mu[j] += v;
        mu[j] /= static_cast<double>(n);
    }
    double mu_mix = 0.0;
    for (std::size_t j = 0; j < k; ++j) mu_mix += components[j].weight * mu[j];

    struct Sums {
        double var_mix = 0.0, upper_mix = 0.0, var_own = 0.0, upper_own = 0.0;
    };
    std::vector<std::vector<Sums>> sums(k, std::vector<Sums>(nb));
    std::vector<std::vector<double>> lower(k, std::vector<double>(k, 0.0));  // [i][j]
    for (std::size_t j = 0; j < k; ++j) {
        Rng r = base;
        for (std::size_t s = 0; s < n; ++s) {
            const double x = sample_tail(components[j].spec, r);
            const double dm = x - mu_mix, dj = x - mu[j];
            auto& acc = sums[j][batch_of(s, n, nb)];
            acc.var_mix += dm * dm;
            if (dm > 0.0) acc.upper_mix += dm * dm;
            acc.var_own += dj * dj;
            if (dj > 0.0) acc.upper_own += dj * dj;
            for (std::size_t i = 0; i < k; ++i) {
                const double di = x - mu[i];
                if (di < 0.0) lower[i][j] += di * di;
            }
        }
    }

    MixtureRhoResult out;
    out.cross_lower = lower;
    for (auto& row : out.cross_lower)
        for (double& v : row) v /= static_cast<double>(n);

    const auto nd = static_cast<double>(n);
    std::vector<double> bv(nb, 0.0), bu(nb, 0.0), weighted_rho(nb, 0.0);
    out.rho_i.assign(k, 0.0);
    out.sigma2_i.assign(k, 0.0);
    double v_mix = 0.0, u_mix = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double w = components[j].weight;
        double vo = 0.0, uo = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            const auto& s = sums[j][b];
            bv[b] += w * s.var_mix;
            bu[b] += w * s.upper_mix;
            vo += s.var_own;
            uo += s.upper_own;
            if (s.var_own > 0.0) weighted_rho[b] += w * s.upper_own / s.var_own;
        }
        out.sigma2_i[j] = vo / nd;
        out.rho_i[j] = vo > 0.0 ? uo / vo : 0.0;
        out.sum_weighted_rho_i += w * out.rho_i[j];
    }
    std::vector<double> diff(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        v_mix += bv[b];
        u_mix += bu[b];
        diff[b] = weighted_rho[b] - (bv[b] > 0.0 ? bu[b] / bv[b] : 0.0);
    }
    out.variance_mix = v_mix / nd;
    out.rho_mix = v_mix > 0.0 ? u_mix / v_mix : 0.0;
    out.ci_halfwidth = standard_error(diff);

    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
        const double own_lower = out.cross_lower[i][i];
        for (std::size_t j = 0; j < k; ++j) {
            const double ratio = own_lower > 0.0 ? out.cross_lower[i][j] / own_lower : std::numeric_limits<double>::infinity();
            margin = std::min(margin, out.variance_mix / out.sigma2_i[i] - std::max(ratio, 1.0));
        }
    }
    out.assumption_margin = margin;
    // Rounding slack only: identical components give a margin of exactly 0 up to round-off.
    out.assumptions_hold = margin >= -1e-12;
    if (out.assumptions_hold) out.holds = out.rho_mix <= out.sum_weighted_rho_i + 3.0 * out.ci_halfwidth;
    return out;
}

std::optional<double> model_rho_for_pairs(const MoeParams& params, const MoeArchitecture& arch,
                                          const Dataset& dataset, std::span<const SampledPair> pairs) {
    if (pairs.empty()) throw InvalidParameter("model_rho needs at least one distribution");
    const auto pl = pool_losses(params, arch, dataset, pairs, empirical_prior(dataset));
    const auto ms = mean_and_semivariance(pl);
    const double var = population_variance(pl.values);
    if (!(var > 0.0)) return std::nullopt;
    return ms.semivar / var;
}

std::optional<double> model_rho(const MoeParams& params, const MoeArchitecture& arch, const Dataset& dataset,
                                const MetaDistribution& meta, std::size_t n_dists, Rng& rng) {
    std::vector<SampledPair> pairs;
    pairs.reserve(n_dists);
    for (std::size_t j = 0; j < n_dists; ++j) pairs.push_back(sample_meta(meta, rng));
    return model_rho_for_pairs(params, arch, dataset, pairs);
}

}  // namespace dirmixe
