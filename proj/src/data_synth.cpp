#include "dirmixe/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dirmixe/error.hpp"

namespace dirmixe {

namespace fs = std::filesystem;

namespace {

constexpr std::array<int, 16> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double radical_inverse(std::uint64_t index, int base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= base;
    }
    return result;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
}

std::size_t sample_categorical(const LabelDistribution& prior, Rng& rng) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
        cumulative += prior[k];
        if (u < cumulative) return k;
    }
    std::size_t k = prior.size() - 1;
    while (prior[k] == 0.0 && k > 0) --k;
    return k;
}

std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

LabelDistribution longtail_prior(std::size_t classes, double rho) {
    return LabelDistribution::normalized(test_component_profile(classes, rho, ShiftKind::Forward));
}

ClassConditionalModel make_conditionals(std::size_t classes, std::size_t dim, double separation,
                                        std::uint64_t seed) {
    if (classes < 2) throw InvalidParameter("need at least 2 classes");
    if (dim < 2) throw InvalidParameter("feature dimension must be >= 2");
    if (dim > kPrimes.size()) throw InvalidParameter("feature dimension above 16 is not supported");
    if (!(separation > 0.0)) throw InvalidParameter("separation must be positive");

    Rng rng(seed);
    std::vector<double> rotation(dim);
    for (double& r : rotation) r = rng.uniform();
    const std::uint64_t skip = rng.below(1024);

    constexpr int kGrowthRounds = 60;
    constexpr std::uint64_t kCandidates = 1 << 14;
    const double min_sq = separation * separation;
    double side = separation * std::pow(static_cast<double>(classes), 1.0 / static_cast<double>(dim));

    for (int round = 0; round < kGrowthRounds; ++round, side *= 1.08) {
        std::vector<std::vector<double>> means;
        for (std::uint64_t i = 1; i <= kCandidates && means.size() < classes; ++i) {
            std::vector<double> point(dim);
            for (std::size_t k = 0; k < dim; ++k) {
                const double u = std::fmod(radical_inverse(i + skip, kPrimes[k]) + rotation[k], 1.0);
                point[k] = (u - 0.5) * side;
            }
            const bool clear = std::all_of(means.begin(), means.end(), [&](const auto& m) {
                return squared_distance(m, point) >= min_sq;
            });
            if (clear) means.push_back(std::move(point));
        }
        if (means.size() == classes) {
            ClassConditionalModel model;
            model.num_classes = classes;
            model.dim = dim;
            model.means = std::move(means);
            model.scales.assign(classes, 1.0);
            model.separation = separation;
            model.seed = seed;
            return model;
        }
    }
    throw ConfigError("could not place class means with the requested separation");
}

Dataset sample_dataset(const ClassConditionalModel& model, const LabelDistribution& prior, std::size_t n,
                       Rng& rng) {
    if (n == 0) throw InvalidParameter("dataset size must be positive");
    if (prior.size() != model.num_classes)
        throw InvalidParameter("prior length does not match the class count");
    Dataset ds;
    ds.num_classes = model.num_classes;
    ds.features = Matrix(n, model.dim);
    ds.labels.resize(n);
    ds.prior_used = prior;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = sample_categorical(prior, rng);
        ds.labels[i] = static_cast<int>(y);
        for (std::size_t k = 0; k < model.dim; ++k)
            ds.features(i, k) = model.means[y][k] + model.scales[y] * rng.normal();
    }
    return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.prior_used = ds.prior_used;
    out.features = Matrix(indices.size(), ds.dim());
    out.labels.resize(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = ds.features.row(indices[r]);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
        out.labels[r] = ds.labels[indices[r]];
    }
    return out;
}

TestSuite build_test_suite_ours(const ClassConditionalModel& model, double rho_test, double concentration,
                                std::size_t n_per_set, Rng& rng) {
    TestSuite suite;
    suite.setting = TestSetting::Ours;
    suite.rho_test = rho_test;
    suite.concentration = concentration;
    const std::array<std::pair<ShiftKind, char>, 3> kinds = {
        {{ShiftKind::Forward, 'F'}, {ShiftKind::Uniform, 'U'}, {ShiftKind::Backward, 'B'}}};
    for (const auto& [kind, tag] : kinds) {
        const auto base = build_test_component(model.num_classes, rho_test, kind, concentration);
        for (int r = 1; r <= 3; ++r) {
            const auto perturbed = perturb_and_normalize(base, concentration, rng);
            auto target = sample_dirichlet(perturbed, rng);
            auto ds = sample_dataset(model, target, n_per_set, rng);
            suite.entries.push_back({std::string(1, tag) + "-" + std::to_string(r), std::move(ds), target});
        }
    }
    return suite;
}

TestSuite build_test_suite_sade(const ClassConditionalModel& model, std::vector<double> rho_list,
                                std::size_t n_per_set, Rng& rng) {
    TestSuite suite;
    suite.setting = TestSetting::Sade;
    suite.rho_test = rho_list.empty() ? 1.0 : *std::max_element(rho_list.begin(), rho_list.end());
    suite.concentration = 0.0;
    std::sort(rho_list.begin(), rho_list.end(), std::greater<>());

    auto ratio_name = [](double rho) {
        std::ostringstream os;
        os << rho;
        return os.str();
    };
    auto add = [&](std::string name, const LabelDistribution& prior) {
        auto ds = sample_dataset(model, prior, n_per_set, rng);
        suite.entries.push_back({std::move(name), std::move(ds), prior});
    };
    for (double rho : rho_list) add("F-" + ratio_name(rho), longtail_prior(model.num_classes, rho));
    add("U-1", LabelDistribution::uniform(model.num_classes));
    for (auto it = rho_list.rbegin(); it != rho_list.rend(); ++it)
        add("B-" + ratio_name(*it), longtail_prior(model.num_classes, *it).reversed());
    return suite;
}

std::vector<std::size_t> class_counts(const Dataset& ds) {
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (int y : ds.labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
}

LabelDistribution empirical_prior(const Dataset& ds) {
    if (ds.size() == 0) throw InvalidParameter("empirical prior of an empty dataset");
    const auto counts = class_counts(ds);
    const bool smooth = std::find(counts.begin(), counts.end(), std::size_t{0}) != counts.end();
    std::vector<double> weights(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        weights[k] = static_cast<double>(counts[k]) + (smooth ? 1.0 : 0.0);
    return LabelDistribution::normalized(std::move(weights));
}

// ---------------------------------------------------------------------------
// Persistence

void write_dataset_csv(const Dataset& ds, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "y";
    for (std::size_t k = 0; k < ds.dim(); ++k) out << ",x" << k;
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (double v : ds.features.row(i)) out << ',' << format_full(v);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset read_dataset_csv(const fs::path& path, std::size_t num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("dataset not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw MissingArtifact("empty dataset file: " + path.string());
    const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (line.rfind("y", 0) != 0 || dim == 0) throw ConfigError("bad dataset header in " + path.string());

    std::vector<double> values;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        const int y = std::stoi(cell);
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ConfigError("label out of range in " + path.string());
        labels.push_back(y);
        std::size_t read = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++read;
        }
        if (read != dim) throw ConfigError("ragged row in " + path.string());
    }
    Dataset ds;
    ds.num_classes = num_classes;
    ds.labels = std::move(labels);
    ds.features = Matrix(ds.labels.size(), dim);
    ds.features.data = std::move(values);
    if (ds.size() == 0) throw ConfigError("dataset has no rows: " + path.string());
    ds.prior_used = empirical_prior(ds);
    return ds;
}

std::string to_string(TestSetting setting) { return setting == TestSetting::Ours ? "ours" : "sade"; }

TestSetting test_setting_from_string(const std::string& name) {
    if (name == "ours" || name == "Ours") return TestSetting::Ours;
    if (name == "sade" || name == "SADE") return TestSetting::Sade;
    throw ConfigError("unknown test setting: " + name);
}

void write_test_suite(const TestSuite& suite, const fs::path& dir) {
    fs::create_directories(dir);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& entry : suite.entries) {
        const std::string csv = entry.name + ".csv";
        write_dataset_csv(entry.dataset, dir / csv);
        entries.push_back({{"name", entry.name}, {"csv_path", csv}, {"target_dist", entry.target_dist.probs()}});
    }
    nlohmann::json manifest = {{"setting", to_string(suite.setting)},
                               {"rho_test", suite.rho_test},
                               {"S_test", suite.concentration},
                               {"entries", entries}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + (dir / "manifest.json").string());
}

TestSuite read_test_suite(const fs::path& dir, std::size_t num_classes) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw MissingArtifact("test suite manifest not found: " + (dir / "manifest.json").string());
    const auto manifest = nlohmann::json::parse(in);
    TestSuite suite;
    suite.setting = test_setting_from_string(manifest.at("setting").get<std::string>());
    suite.rho_test = manifest.at("rho_test").get<double>();
    suite.concentration = manifest.at("S_test").get<double>();
    for (const auto& e : manifest.at("entries")) {
        TestEntry entry;
        entry.name = e.at("name").get<std::string>();
        entry.target_dist = LabelDistribution(e.at("target_dist").get<std::vector<double>>());
        entry.dataset = read_dataset_csv(dir / e.at("csv_path").get<std::string>(), num_classes);
        entry.dataset.prior_used = entry.target_dist;
        suite.entries.push_back(std::move(entry));
    }
    return suite;
}

}  // namespace dirmixe
