#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dirmixe/matrix.hpp"

namespace dirmixe {

enum class Activation { ReLU, Tanh };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Shared MLP backbone followed by K linear expert heads, each producing C logits.
struct MoeArchitecture {
    std::size_t d_in = 2;
    std::vector<std::size_t> hidden = {64, 64};  ///< empty: the backbone is the identity
    std::size_t num_classes = 10;
    std::size_t num_experts = 3;
    Activation activation = Activation::ReLU;

    /// Throws ConfigError on K < 1, C < 2, d_in < 1 or a zero-width layer.
    void validate() const;
    std::size_t representation_dim() const { return hidden.empty() ? d_in : hidden.back(); }

    bool operator==(const MoeArchitecture&) const = default;
};

/// y = x W + b with W stored in x fan-in (rows) by fan-out (cols).
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

/// Parameters of the backbone and the K heads. The same type holds gradients
/// and momentum buffers.
struct MoeParams {
    std::vector<DenseLayer> backbone;
    std::vector<DenseLayer> heads;

    std::size_t parameter_count() const;
    /// Same shapes, every entry zero.
    MoeParams zeros_like() const;
    /// this += scale * other. Shapes must agree.
    void axpy(double scale, const MoeParams& other);
    void scale(double factor);
    bool all_finite() const;

    /// Flat copy in checkpoint order: backbone layers, then heads 0..K-1;
    /// per layer the row-major weight then the bias.
    std::vector<double> flatten() const;
    void assign_flat(std::span<const double> flat);

    bool operator==(const MoeParams&) const = default;
};

/// Pre-softmax scores, B x K x C.
struct ExpertLogits {
    std::size_t batch = 0;
    std::size_t num_experts = 0;
    std::size_t num_classes = 0;
    std::vector<double> values;

    double& at(std::size_t b, std::size_t k, std::size_t c) {
        return values[(b * num_experts + k) * num_classes + c];
    }
    double at(std::size_t b, std::size_t k, std::size_t c) const {
        return values[(b * num_experts + k) * num_classes + c];
    }
    std::span<const double> row(std::size_t b, std::size_t k) const {
        return {values.data() + (b * num_experts + k) * num_classes, num_classes};
    }
    std::span<double> row(std::size_t b, std::size_t k) {
        return {values.data() + (b * num_experts + k) * num_classes, num_classes};
    }
};

/// Activations cached by forward() for backpropagation.
struct ForwardTrace {
    std::vector<Matrix> inputs;       ///< input to each backbone layer
    std::vector<Matrix> pre_activation;
    Matrix representation;            ///< shared ψ(x) fed to every head
};

/// Fan-in scaled uniform weights (std sqrt(2 / fan_in)) and zero biases.
MoeParams init_params(const MoeArchitecture& arch, std::uint64_t seed);

/// All-zero parameters with the architecture's shapes.
MoeParams zero_params(const MoeArchitecture& arch);

/// ψ computed once per row, then every head applied to it.
ExpertLogits forward(const MoeParams& params, const MoeArchitecture& arch, const Matrix& x,
                     ForwardTrace* trace = nullptr);

/// ψ(x) alone.
Matrix representation(const MoeParams& params, const MoeArchitecture& arch, const Matrix& x);

/// Gradient of a scalar loss w.r.t. every parameter, given dL/dlogits (B x K x C)
/// and the trace of the forward pass that produced the logits.
MoeParams backward(const MoeParams& params, const MoeArchitecture& arch, const ForwardTrace& trace,
                   const ExpertLogits& grad_logits);

/// argmax with ties to the lowest index.
std::size_t predict_expert(std::span<const double> logits);

void to_json(nlohmann::json& j, const MoeArchitecture& arch);
void from_json(const nlohmann::json& j, MoeArchitecture& arch);

/// Writes `<stem>.json` (architecture, seed, blob name, layout) and `<stem>.bin`
/// (little-endian float64 in flatten() order).
void save_checkpoint(const std::filesystem::path& manifest_path, const MoeParams& params,
                     const MoeArchitecture& arch, std::uint64_t seed);

struct Checkpoint {
    MoeArchitecture arch;
    MoeParams params;
    std::uint64_t seed = 0;
};

/// Throws MissingArtifact if either file is absent, ConfigError on size mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace dirmixe
