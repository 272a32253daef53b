#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dirmixe/matrix.hpp"
#include "dirmixe/rng.hpp"
#include "dirmixe/simplex.hpp"

namespace dirmixe {

/// Isotropic Gaussian class conditionals p(x | y) shared by every split.
///
/// The same object generates training and test data, which is what makes the
/// shift between splits a pure label shift.
struct ClassConditionalModel {
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    std::vector<std::vector<double>> means;
    std::vector<double> scales;
    double separation = 0.0;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::size_t num_classes = 0;
    Matrix features;          ///< n x d
    std::vector<int> labels;  ///< n entries in [0, C)
    LabelDistribution prior_used;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
};

struct TestEntry {
    std::string name;
    Dataset dataset;
    LabelDistribution target_dist;
};

enum class TestSetting { Ours, Sade };

struct TestSuite {
    TestSetting setting = TestSetting::Ours;
    double rho_test = 100.0;
    double concentration = 1000.0;
    std::vector<TestEntry> entries;
};

inline constexpr std::size_t kDefaultTestSetSize = 2000;
inline constexpr double kDefaultTestConcentration = 1000.0;

/// Long-tailed prior with P_i ∝ rho^{-(i-1)/(C-1)}; head/tail ratio exactly rho.
LabelDistribution longtail_prior(std::size_t classes, double rho);

/// Deterministic placement of C unit-variance class means with pairwise
/// distance >= separation, using a seed-rotated Halton sequence inside a box
/// that grows until all means fit. Throws ConfigError if placement fails.
ClassConditionalModel make_conditionals(std::size_t classes, std::size_t dim, double separation,
                                        std::uint64_t seed);

/// n i.i.d. samples: y ~ prior, x ~ N(mean_y, scale_y² I).
Dataset sample_dataset(const ClassConditionalModel& model, const LabelDistribution& prior,
                       std::size_t n, Rng& rng);

/// Rows `indices` of `ds`, in order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

/// Nine entries F-1..F-3, U-1..U-3, B-1..B-3. Each: test Dirichlet component,
/// 5% perturbation, one label distribution drawn from it, then a dataset.
TestSuite build_test_suite_ours(const ClassConditionalModel& model, double rho_test,
                                double concentration, std::size_t n_per_set, Rng& rng);

/// Fixed long-tail priors: forward per ratio (largest first), one uniform,
/// backward per ratio (smallest first). No Dirichlet draw.
TestSuite build_test_suite_sade(const ClassConditionalModel& model, std::vector<double> rho_list,
                                std::size_t n_per_set, Rng& rng);

/// Class frequencies. If any class is absent, every class gets one extra count.
LabelDistribution empirical_prior(const Dataset& ds);

/// Per-class label counts.
std::vector<std::size_t> class_counts(const Dataset& ds);

// CSV persistence: header `y,x0,...,x{d-1}`, one row per sample, LF endings.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes);

/// Writes one CSV per entry plus `manifest.json` into `dir`.
void write_test_suite(const TestSuite& suite, const std::filesystem::path& dir);
TestSuite read_test_suite(const std::filesystem::path& dir, std::size_t num_classes);

std::string to_string(TestSetting setting);
TestSetting test_setting_from_string(const std::string& name);

}  // namespace dirmixe
