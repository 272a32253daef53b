#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dirmixe/aggregation.hpp"
#include "dirmixe/data_synth.hpp"
#include "dirmixe/moe_model.hpp"
#include "dirmixe/theory.hpp"
#include "dirmixe/trainer.hpp"

namespace dirmixe {

struct DataSection {
    std::size_t C = 10;
    std::size_t d = 2;
    double rho_train = 100.0;
    std::size_t N_train = 5000;
    double separation = 2.5;
    std::optional<std::uint64_t> seed;  ///< derived from the top-level seed when absent
};

struct ModelSection {
    std::vector<std::size_t> hidden{64, 64};
    Activation activation = Activation::ReLU;
};

struct MetaSection {
    double S_train = kDefaultTrainConcentration;
    std::size_t K = 3;
};

struct TestSection {
    TestSetting setting = TestSetting::Ours;
    double rho_test = 100.0;
    double S_test = kDefaultTestConcentration;
    std::size_t n_per_set = kDefaultTestSetSize;
    std::vector<double> rho_list{2, 5, 10, 25, 50, 100};
    std::optional<std::uint64_t> seed;
};

struct AggregationSection {
    int steps = 100;
    double lr = 0.05;
    double noise_sigma = 0.0;
    MixSpace space = MixSpace::Probability;
    std::size_t many_above = 100;
    std::size_t few_below = 20;
    std::optional<std::uint64_t> seed;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    DataSection data;
    ModelSection model;
    MetaSection meta;
    TrainConfig train;
    std::optional<std::uint64_t> train_seed;
    TestSection test;
    AggregationSection aggregation;
    std::size_t model_rho_dists = 300;
    std::filesystem::path output_dir = "dirmixe_out";

    /// Throws ConfigError on any field outside its module's invariants.
    void validate() const;

    std::uint64_t data_seed() const;
    std::uint64_t test_seed() const;
    std::uint64_t effective_train_seed() const;
    std::uint64_t aggregation_seed() const;

    MoeArchitecture architecture(bool single_expert = false) const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Strict: unknown keys and wrong types raise ConfigError.
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

/// Defaults <- config file (if any) <- DIRMIXE_SEED <- dotted overrides, then validate().
/// Each override is ("train.lambda", "0.5"); the value is parsed as JSON, falling back to a string.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Output layout under output_dir.
struct Layout {
    std::filesystem::path root;

    std::filesystem::path data_dir() const { return root / "data"; }
    std::filesystem::path train_csv() const { return data_dir() / "train.csv"; }
    std::filesystem::path test_dir() const { return data_dir() / "test"; }
    std::filesystem::path data_manifest() const { return data_dir() / "manifest.json"; }
    std::filesystem::path checkpoint(bool single_expert) const {
        return root / "checkpoints" / (single_expert ? "baseline.json" : "model.json");
    }
    std::filesystem::path train_log(bool single_expert) const {
        return root / "logs" / (single_expert ? "baseline_train.jsonl" : "train.jsonl");
    }
    std::filesystem::path results_dir() const { return root / "results"; }
};

void cmd_gen_data(const ExperimentConfig& cfg);
TrainState cmd_train(const ExperimentConfig& cfg, bool single_expert = false);

struct EvalOutcome {
    EvaluationTable table;
    std::vector<std::optional<double>> correlation;  ///< empty for the baseline or < 3 entries
    std::optional<double> model_rho;
};

/// Reads the checkpoint (default location unless given) and the stored test suite.
EvalOutcome cmd_eval(const ExperimentConfig& cfg, bool single_expert = false,
                     const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

struct TheoryRequest {
    bool exponential = false;
    std::vector<double> rates{1.0};
    bool gamma = false;
    std::vector<double> alphas;
    double beta = 1.0;
    bool pareto = false;
    std::vector<double> thetas;
    double pareto_scale = 0.1;
    std::size_t mixtures = 0;
    std::size_t samples = kDefaultMonteCarloSamples;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "dirmixe_out";
};

struct TheoryRow {
    std::string kind;
    std::string params;
    std::optional<double> rho_mc;
    double ci = 0.0;
    double rho_bound = 0.0;
    std::optional<bool> holds;  ///< nullopt prints "n/a"
};

/// Writes results/theory_rho.csv, curve_gamma.csv and curve_pareto.csv; returns the rows.
std::vector<TheoryRow> cmd_theory(const TheoryRequest& req);

/// Concatenates every CSV under results/ (sorted by name) into results/summary.csv.
void cmd_report(const ExperimentConfig& cfg);

/// "a:b:step" (inclusive) or "x,y,z".
std::vector<double> parse_grid(const std::string& text);

/// Random two-component Gamma mixture (shapes in [0.2, 3], rates in [0.5, 2], weight in [0.1, 0.9]).
std::vector<MixtureComponent> random_gamma_mixture(Rng& rng);

/// 6 significant digits; "nan" for NaN.
std::string format_number(double v);

}  // namespace dirmixe
