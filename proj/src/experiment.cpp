#include "dirmixe/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dirmixe/error.hpp"

namespace dirmixe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum SeedPurpose : std::uint64_t { kDataSeed = 1, kTestSeed = 2, kTrainSeed = 3, kAggregationSeed = 4 };

std::uint64_t derive_seed(std::uint64_t top, std::uint64_t purpose) { return Rng::stream(top, purpose).next_u64(); }

json optional_seed(const std::optional<std::uint64_t>& s) { return s ? json(*s) : json(nullptr); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; }))
            throw ConfigError("unknown config key: " + where + (where.empty() ? "" : ".") + item.key());
    }
}

template <class T>
void read_if(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    const std::string name = where + "." + key;
    if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
            throw ConfigError(name + " must be a non-negative integer");
        out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
        out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(name + " must be a number");
        out = v.get<T>();
    } else {
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name + " has the wrong type");
        }
    }
}

void read_seed(const json& j, const char* key, std::optional<std::uint64_t>& out, const std::string& where) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
        out.reset();
        return;
    }
    std::uint64_t v = 0;
    read_if(j, key, v, where);
    out = v;
}

template <class E, class F>
void read_enum(const json& j, const char* key, E& out, F parse, const std::string& where) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ConfigError(where + "." + key + " must be a string");
    out = parse(j.at(key).get<std::string>());
}

std::string hinge_name(HingeMean m) { return m == HingeMean::Differentiated ? "differentiated" : "stop_gradient"; }

HingeMean hinge_from(const std::string& s) {
    if (s == "differentiated") return HingeMean::Differentiated;
    if (s == "stop_gradient") return HingeMean::StopGradient;
    throw ConfigError("unknown hinge_mean: " + s);
}

fs::path ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
}

std::ofstream open_out(const fs::path& p) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
    return out;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "undefined"; }

double nan_mean(const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v)
        if (!std::isnan(x)) {
            s += x;
            ++n;
        }
    return n == 0 ? std::nan("") : s / static_cast<double>(n);
}

MetaDistribution eval_meta(const ExperimentConfig& cfg, const Dataset& train_ds, std::size_t experts) {
    return training_meta_for(empirical_prior(train_ds), experts, cfg.meta.S_train);
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0;  // drop the sign of -0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void ExperimentConfig::validate() const {
    if (data.C < 2) throw ConfigError("data.C must be >= 2");
    if (data.d < 2 || data.d > 16) throw ConfigError("data.d must be in [2, 16]");
    if (!(data.rho_train >= 1.0)) throw ConfigError("data.rho_train must be >= 1");
    if (data.N_train < 1) throw ConfigError("data.N_train must be >= 1");
    if (!(data.separation > 0.0)) throw ConfigError("data.separation must be positive");
    if (!(meta.S_train > 0.0)) throw ConfigError("meta.S_train must be positive");
    if (meta.K < 1) throw ConfigError("meta.K must be >= 1");
    architecture().validate();
    train.validate();
    if (!(test.rho_test >= 1.0)) throw ConfigError("test.rho_test must be >= 1");
    if (!(test.S_test > 0.0)) throw ConfigError("test.S_test must be positive");
    if (test.n_per_set < 1) throw ConfigError("test.n_per_set must be >= 1");
    if (test.setting == TestSetting::Sade && test.rho_list.empty()) throw ConfigError("test.rho_list is empty");
    for (double r : test.rho_list)
        if (!(r >= 1.0)) throw ConfigError("test.rho_list entries must be >= 1");
    if (aggregation.steps < 0) throw ConfigError("aggregation.steps must be >= 0");
    if (!(aggregation.lr > 0.0)) throw ConfigError("aggregation.lr must be positive");
    if (!std::isfinite(aggregation.noise_sigma)) throw ConfigError("aggregation.noise_sigma must be finite");
    if (aggregation.few_below > aggregation.many_above + 1)
        throw ConfigError("aggregation.few_below must not exceed many_above + 1");
    if (model_rho_dists < 2) throw ConfigError("diagnostics.model_rho_dists must be >= 2");
    if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

std::uint64_t ExperimentConfig::data_seed() const { return data.seed.value_or(derive_seed(seed, kDataSeed)); }
std::uint64_t ExperimentConfig::test_seed() const { return test.seed.value_or(derive_seed(seed, kTestSeed)); }
std::uint64_t ExperimentConfig::effective_train_seed() const {
    return train_seed.value_or(derive_seed(seed, kTrainSeed));
}
std::uint64_t ExperimentConfig::aggregation_seed() const {
    return aggregation.seed.value_or(derive_seed(seed, kAggregationSeed));
}

MoeArchitecture ExperimentConfig::architecture(bool single_expert) const {
    MoeArchitecture arch;
    arch.d_in = data.d;
    arch.hidden = model.hidden;
    arch.num_classes = data.C;
    arch.num_experts = single_expert ? 1 : meta.K;
    arch.activation = model.activation;
    return arch;
}

void to_json(json& j, const ExperimentConfig& c) {
    j = json{
        {"seed", c.seed},
        {"data",
         {{"C", c.data.C},
          {"d", c.data.d},
          {"rho_train", c.data.rho_train},
          {"N_train", c.data.N_train},
          {"separation", c.data.separation},
          {"seed", optional_seed(c.data.seed)}}},
        {"model", {{"hidden", c.model.hidden}, {"activation", to_string(c.model.activation)}}},
        {"meta", {{"S_train", c.meta.S_train}, {"K", c.meta.K}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"momentum", c.train.momentum},
          {"schedule",
           {{"kind", to_string(c.train.lr_schedule.kind)},
            {"milestones", c.train.lr_schedule.milestones},
            {"factor", c.train.lr_schedule.factor}}},
          {"lambda", c.train.lambda},
          {"pool_per_batch", c.train.pool_per_batch},
          {"hinge_mean", hinge_name(c.train.hinge_mean)},
          {"max_grad_norm", c.train.max_grad_norm},
          {"seed", optional_seed(c.train_seed)}}},
        {"test",
         {{"setting", to_string(c.test.setting)},
          {"rho_test", c.test.rho_test},
          {"S_test", c.test.S_test},
          {"n_per_set", c.test.n_per_set},
          {"rho_list", c.test.rho_list},
          {"seed", optional_seed(c.test.seed)}}},
        {"aggregation",
         {{"steps", c.aggregation.steps},
          {"lr", c.aggregation.lr},
          {"noise_sigma", c.aggregation.noise_sigma},
          {"space", to_string(c.aggregation.space)},
          {"many_above", c.aggregation.many_above},
          {"few_below", c.aggregation.few_below},
          {"seed", optional_seed(c.aggregation.seed)}}},
        {"diagnostics", {{"model_rho_dists", c.model_rho_dists}}},
        {"output_dir", c.output_dir.generic_string()},
    };
}

void from_json(const json& j, ExperimentConfig& c) {
    check_keys(j, {"seed", "data", "model", "meta", "train", "test", "aggregation", "diagnostics", "output_dir"}, "");
    read_if(j, "seed", c.seed, "");
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"C", "d", "rho_train", "N_train", "separation", "seed"}, "data");
        read_if(d, "C", c.data.C, "data");
        read_if(d, "d", c.data.d, "data");
        read_if(d, "rho_train", c.data.rho_train, "data");
        read_if(d, "N_train", c.data.N_train, "data");
        read_if(d, "separation", c.data.separation, "data");
        read_seed(d, "seed", c.data.seed, "data");
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"hidden", "activation"}, "model");
        read_if(m, "hidden", c.model.hidden, "model");
        read_enum(m, "activation", c.model.activation, activation_from_string, "model");
    }
    if (j.contains("meta")) {
        const auto& m = j.at("meta");
        check_keys(m, {"S_train", "K"}, "meta");
        read_if(m, "S_train", c.meta.S_train, "meta");
        read_if(m, "K", c.meta.K, "meta");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t,
                   {"epochs", "batch_size", "lr", "momentum", "schedule", "lambda", "pool_per_batch", "hinge_mean",
                    "max_grad_norm", "seed"},
                   "train");
        read_if(t, "epochs", c.train.epochs, "train");
        read_if(t, "batch_size", c.train.batch_size, "train");
        read_if(t, "lr", c.train.lr, "train");
        read_if(t, "momentum", c.train.momentum, "train");
        if (t.contains("schedule")) {
            const auto& s = t.at("schedule");
            check_keys(s, {"kind", "milestones", "factor"}, "train.schedule");
            read_enum(s, "kind", c.train.lr_schedule.kind, schedule_kind_from_string, "train.schedule");
            read_if(s, "milestones", c.train.lr_schedule.milestones, "train.schedule");
            read_if(s, "factor", c.train.lr_schedule.factor, "train.schedule");
        }
        read_if(t, "lambda", c.train.lambda, "train");
        read_if(t, "pool_per_batch", c.train.pool_per_batch, "train");
        read_enum(t, "hinge_mean", c.train.hinge_mean, hinge_from, "train");
        read_if(t, "max_grad_norm", c.train.max_grad_norm, "train");
        read_seed(t, "seed", c.train_seed, "train");
    }
    if (j.contains("test")) {
        const auto& t = j.at("test");
        check_keys(t, {"setting", "rho_test", "S_test", "n_per_set", "rho_list", "seed"}, "test");
        read_enum(t, "setting", c.test.setting, test_setting_from_string, "test");
        read_if(t, "rho_test", c.test.rho_test, "test");
        read_if(t, "S_test", c.test.S_test, "test");
        read_if(t, "n_per_set", c.test.n_per_set, "test");
        read_if(t, "rho_list", c.test.rho_list, "test");
        read_seed(t, "seed", c.test.seed, "test");
    }
    if (j.contains("aggregation")) {
        const auto& a = j.at("aggregation");
        check_keys(a, {"steps", "lr", "noise_sigma", "space", "many_above", "few_below", "seed"}, "aggregation");
        read_if(a, "steps", c.aggregation.steps, "aggregation");
        read_if(a, "lr", c.aggregation.lr, "aggregation");
        read_if(a, "noise_sigma", c.aggregation.noise_sigma, "aggregation");
        read_enum(a, "space", c.aggregation.space, mix_space_from_string, "aggregation");
        read_if(a, "many_above", c.aggregation.many_above, "aggregation");
        read_if(a, "few_below", c.aggregation.few_below, "aggregation");
        read_seed(a, "seed", c.aggregation.seed, "aggregation");
    }
    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        check_keys(d, {"model_rho_dists"}, "diagnostics");
        read_if(d, "model_rho_dists", c.model_rho_dists, "diagnostics");
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw ConfigError("output_dir must be a string");
        c.output_dir = j.at("output_dir").get<std::string>();
    }
}

ExperimentConfig load_config(const std::optional<fs::path>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
    json doc = ExperimentConfig{};
    if (file) {
        std::ifstream in(*file);
        if (!in) throw MissingArtifact("config file not found: " + file->string());
        json user;
        try {
            user = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
        ExperimentConfig probe;
        from_json(user, probe);  // strict key/type check before merging
        doc.merge_patch(user);
    }
    if (const char* env = std::getenv("DIRMIXE_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*env == '\0' || *end != '\0' || *env == '-') throw ConfigError("DIRMIXE_SEED must be an unsigned integer");
        doc["seed"] = static_cast<std::uint64_t>(v);
    }
    for (const auto& [path, text] : overrides) {
        std::string pointer = "/" + path;
        std::replace(pointer.begin(), pointer.end(), '.', '/');
        const json::json_pointer ptr(pointer);
        if (!doc.contains(ptr)) throw ConfigError("unknown config key: " + path);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::parse_error&) {
            value = text;
        }
        doc[ptr] = value;
    }
    ExperimentConfig cfg;
    from_json(doc, cfg);
    cfg.validate();
    return cfg;
}

void cmd_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const Layout layout{cfg.output_dir};
    fs::create_directories(layout.data_dir());
    const auto model = make_conditionals(cfg.data.C, cfg.data.d, cfg.data.separation, cfg.data_seed());
    const auto prior = longtail_prior(cfg.data.C, cfg.data.rho_train);
    Rng train_rng(cfg.data_seed());
    const auto train_ds = sample_dataset(model, prior, cfg.data.N_train, train_rng);
    write_dataset_csv(train_ds, layout.train_csv());

    Rng test_rng(cfg.test_seed());
    const auto suite = cfg.test.setting == TestSetting::Ours
                           ? build_test_suite_ours(model, cfg.test.rho_test, cfg.test.S_test, cfg.test.n_per_set,
                                                   test_rng)
                           : build_test_suite_sade(model, cfg.test.rho_list, cfg.test.n_per_set, test_rng);
    write_test_suite(suite, layout.test_dir());

    json means = json::array();
    for (const auto& m : model.means) means.push_back(m);
    json entries = json::array();
    for (const auto& e : suite.entries) entries.push_back(e.name);
    json manifest{
        {"config", cfg},
        {"seeds",
         {{"top", cfg.seed},
          {"data", cfg.data_seed()},
          {"test", cfg.test_seed()},
          {"train", cfg.effective_train_seed()},
          {"aggregation", cfg.aggregation_seed()}}},
        {"train_csv", "train.csv"},
        {"train_counts", class_counts(train_ds)},
        {"class_means", means},
        {"test_dir", "test"},
        {"test_entries", entries},
    };
    auto out = open_out(layout.data_manifest());
    out << manifest.dump(2) << '\n';
}

TrainState cmd_train(const ExperimentConfig& cfg, bool single_expert) {
    cfg.validate();
    const Layout layout{cfg.output_dir};
    const auto ds = read_dataset_csv(layout.train_csv(), cfg.data.C);
    const auto arch = cfg.architecture(single_expert);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.effective_train_seed();
    tc.s_train = cfg.meta.S_train;
    if (single_expert) tc.lambda = 0.0;
    const auto meta = training_meta_for(empirical_prior(ds), arch.num_experts, cfg.meta.S_train);

    auto log = open_out(layout.train_log(single_expert));
    const auto state = train(ds, arch, tc, meta, [&](const EpochRecord& r) {
        const json line{{"epoch", r.epoch}, {"mean", r.mean}, {"semivar", r.semivar}, {"objective", r.objective},
                        {"lr", r.lr}};
        log << line.dump() << '\n';
        log.flush();
    });
    ensure_parent(layout.checkpoint(single_expert));
    save_checkpoint(layout.checkpoint(single_expert), state.params, arch, tc.seed);
    return state;
}

EvalOutcome cmd_eval(const ExperimentConfig& cfg, bool single_expert, const std::optional<fs::path>& checkpoint) {
    cfg.validate();
    const Layout layout{cfg.output_dir};
    const auto ckpt = load_checkpoint(checkpoint.value_or(layout.checkpoint(single_expert)));
    const auto& arch = ckpt.arch;
    if (arch.num_classes != cfg.data.C || arch.d_in != cfg.data.d)
        throw ConfigError("checkpoint architecture does not match the data config");
    const auto suite = read_test_suite(layout.test_dir(), cfg.data.C);
    const auto train_ds = read_dataset_csv(layout.train_csv(), cfg.data.C);
    const auto groups =
        ClassGroups::from_counts(class_counts(train_ds), cfg.aggregation.many_above, cfg.aggregation.few_below);

    std::vector<AggregationWeights> weights;
    for (std::size_t e = 0; e < suite.entries.size(); ++e) {
        if (arch.num_experts == 1) {
            weights.push_back(AggregationWeights::uniform(1));
            continue;
        }
        WeightLearningConfig wl;
        wl.steps = cfg.aggregation.steps;
        wl.lr = cfg.aggregation.lr;
        wl.noise_sigma = cfg.aggregation.noise_sigma;
        wl.space = cfg.aggregation.space;
        wl.seed = Rng::stream(cfg.aggregation_seed(), e).next_u64();
        weights.push_back(learn_weights(ckpt.params, arch, suite.entries[e].dataset.features, wl));
    }

    EvalOutcome outcome;
    outcome.table = evaluate(ckpt.params, arch, suite, weights, groups, cfg.aggregation.space);
    if (arch.num_experts >= 2 && suite.entries.size() >= 3) {
        std::vector<std::vector<double>> losses;
        for (const auto& e : suite.entries) losses.push_back(per_expert_losses(ckpt.params, arch, e.dataset));
        outcome.correlation = weight_loss_correlation(weights, losses);
    }
    Rng rho_rng = Rng::stream(cfg.aggregation_seed(), 1u << 20);
    outcome.model_rho = model_rho(ckpt.params, arch, train_ds, eval_meta(cfg, train_ds, arch.num_experts),
                                  cfg.model_rho_dists, rho_rng);

    const std::string prefix = single_expert ? "baseline_" : "";
    const auto dir = layout.results_dir();
    fs::create_directories(dir);
    const std::size_t k = arch.num_experts;
    {
        auto out = open_out(dir / (prefix + "accuracy.csv"));
        out << "entry,accuracy,acc_many,acc_medium,acc_few";
        for (std::size_t i = 0; i < k; ++i) out << ",omega_" << i;
        out << '\n';
        std::vector<double> many, medium, few, omega_mean(k, 0.0);
        for (const auto& r : outcome.table.entries) {
            out << r.name << ',' << format_number(r.accuracy) << ',' << format_number(r.acc_many) << ','
                << format_number(r.acc_medium) << ',' << format_number(r.acc_few);
            for (double w : r.omega) out << ',' << format_number(w);
            out << '\n';
            many.push_back(r.acc_many);
            medium.push_back(r.acc_medium);
            few.push_back(r.acc_few);
            for (std::size_t i = 0; i < k; ++i)
                omega_mean[i] += r.omega[i] / static_cast<double>(outcome.table.entries.size());
        }
        out << "Mean," << format_number(outcome.table.mean_accuracy) << "(±"
            << format_number(outcome.table.std_accuracy) << ")," << format_number(nan_mean(many)) << ','
            << format_number(nan_mean(medium)) << ',' << format_number(nan_mean(few));
        for (double w : omega_mean) out << ',' << format_number(w);
        out << '\n';
    }
    {
        auto out = open_out(dir / (prefix + "weights.csv"));
        out << "entry";
        for (std::size_t i = 0; i < k; ++i) out << ",omega_" << i;
        out << '\n';
        for (const auto& r : outcome.table.entries) {
            out << r.name;
            for (double w : r.omega) out << ',' << format_number(w);
            out << '\n';
        }
    }
    if (!outcome.correlation.empty()) {
        const auto meta = eval_meta(cfg, train_ds, k);
        auto out = open_out(dir / (prefix + "correlation.csv"));
        out << "expert,component,pearson\n";
        for (std::size_t i = 0; i < k; ++i)
            out << i << ',' << to_string(meta.components()[i].label()) << ','
                << format_optional(outcome.correlation[i]) << '\n';
    }
    {
        auto out = open_out(dir / (prefix + "model_rho.csv"));
        out << "quantity,value\n";
        out << "model_rho," << format_optional(outcome.model_rho) << '\n';
        out << "n_dists," << cfg.model_rho_dists << '\n';
        out << "reference_cifar10,0.503\n";
        out << "reference_cifar100,0.509\n";
    }
    return outcome;
}

std::vector<double> parse_grid(const std::string& text) {
    auto number = [&](const std::string& s) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError("bad number in grid: '" + s + "'");
        return v;
    };
    std::vector<std::string> parts;
    std::string part;
    const char sep = text.find(':') != std::string::npos ? ':' : ',';
    std::stringstream ss(text);
    while (std::getline(ss, part, sep)) parts.push_back(part);
    std::vector<double> out;
    if (sep == ':') {
        if (parts.size() != 3) throw ConfigError("range grid must be start:stop:step");
        const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
        if (!(step > 0.0) || b < a) throw ConfigError("range grid needs step > 0 and stop >= start");
        const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
        for (std::size_t i = 0; i < count; ++i) out.push_back(std::round((a + step * static_cast<double>(i)) * 1e12) / 1e12);
    } else {
        for (const auto& p : parts) out.push_back(number(p));
    }
    if (out.empty()) throw ConfigError("empty grid");
    return out;
}

std::vector<MixtureComponent> random_gamma_mixture(Rng& rng) {
    const double w = rng.uniform(0.1, 0.9);
    std::vector<MixtureComponent> out;
    out.push_back({w, GammaTail{rng.uniform(0.2, 3.0), rng.uniform(0.5, 2.0)}});
    out.push_back({1.0 - w, GammaTail{rng.uniform(0.2, 3.0), rng.uniform(0.5, 2.0)}});
    return out;
}

std::vector<TheoryRow> cmd_theory(const TheoryRequest& req) {
    std::vector<TheoryRow> rows;
    std::uint64_t stream = 0;
    auto run = [&](const TailDistributionSpec& spec, bool exact) {
        Rng rng = Rng::stream(req.seed, stream++);
        const auto rep = rho_monte_carlo(spec, req.samples, rng);
        TheoryRow row{kind_name(spec), params_string(spec), rep.rho_mc, rep.ci_halfwidth, rep.rho_bound, {}};
        if (rep.rho_mc) {
            row.holds = exact ? std::fabs(*rep.rho_mc - rep.rho_bound) <=
                                    std::max(0.01 * rep.rho_bound, 3.0 * rep.ci_halfwidth)
                              : *rep.rho_mc - rep.ci_halfwidth >= rep.rho_bound;
        }
        rows.push_back(row);
    };
    if (req.exponential)
        for (double rate : req.rates) run(ExponentialTail{rate}, false);
    if (req.gamma)
        for (double a : req.alphas) run(GammaTail{a, req.beta}, false);
    if (req.pareto)
        for (double t : req.thetas) run(ParetoTail{t, req.pareto_scale}, true);
    for (std::size_t m = 0; m < req.mixtures; ++m) {
        Rng rng = Rng::stream(req.seed, 1000 + m);
        const auto comps = random_gamma_mixture(rng);
        const auto res = mixture_rho_check(comps, req.samples, rng);
        std::string params = "w=" + format_number(comps[0].weight);
        for (std::size_t i = 0; i < comps.size(); ++i) {
            const auto& g = std::get<GammaTail>(comps[i].spec);
            params += ";a" + std::to_string(i + 1) + "=" + format_number(g.shape) + ";b" + std::to_string(i + 1) +
                      "=" + format_number(g.rate);
        }
        rows.push_back({"gamma_mixture", params, res.rho_mix, res.ci_halfwidth, res.sum_weighted_rho_i, res.holds});
    }

    const auto dir = Layout{req.output_dir}.results_dir();
    fs::create_directories(dir);
    {
        auto out = open_out(dir / "theory_rho.csv");
        out << "kind,params,rho_mc,ci,rho_bound,holds\n";
        for (const auto& r : rows)
            out << r.kind << ',' << r.params << ',' << format_optional(r.rho_mc) << ',' << format_number(r.ci) << ','
                << format_number(r.rho_bound) << ',' << (r.holds ? (*r.holds ? "true" : "false") : "n/a") << '\n';
    }
    {
        auto out = open_out(dir / "curve_gamma.csv");
        out << "alpha,rho_bound\n";
        for (int i = 1; i <= 50; ++i) {
            const double a = 0.02 * i;
            out << format_number(a) << ',' << format_number(rho_bound(GammaTail{a, 1.0})) << '\n';
        }
    }
    {
        auto out = open_out(dir / "curve_pareto.csv");
        out << "theta,rho_exact\n";
        for (int i = 1; i <= 80; ++i) {
            const double t = 2.0 + 0.1 * i;
            out << format_number(t) << ',' << format_number(rho_bound(ParetoTail{t, req.pareto_scale})) << '\n';
        }
    }
    return rows;
}

void cmd_report(const ExperimentConfig& cfg) {
    const auto dir = Layout{cfg.output_dir}.results_dir();
    if (!fs::exists(dir)) throw MissingArtifact("no results directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".csv" && entry.path().filename() != "summary.csv")
            files.push_back(entry.path());
    if (files.empty()) throw MissingArtifact("no result CSVs in " + dir.string());
    std::sort(files.begin(), files.end());
    auto out = open_out(dir / "summary.csv");
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        out << "# " << f.filename().string() << '\n' << in.rdbuf();
        out << '\n';
    }
}

}  // namespace dirmixe
