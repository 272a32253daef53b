#include "dirmixe/moe_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dirmixe/error.hpp"
#include "dirmixe/rng.hpp"

namespace dirmixe {

namespace fs = std::filesystem;

namespace {

DenseLayer make_layer(std::size_t fan_in, std::size_t fan_out) {
    return {Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
}

template <typename Fn>
void for_each_layer(MoeParams& p, Fn&& fn) {
    for (auto& l : p.backbone) fn(l);
    for (auto& l : p.heads) fn(l);
}

template <typename Fn>
void for_each_layer(const MoeParams& p, Fn&& fn) {
    for (const auto& l : p.backbone) fn(l);
    for (const auto& l : p.heads) fn(l);
}

// out = in * W + b
void affine(const Matrix& in, const DenseLayer& layer, Matrix& out) {
    const std::size_t n = in.rows, m = layer.weight.rows, k = layer.weight.cols;
    out = Matrix(n, k);
    for (std::size_t r = 0; r < n; ++r) {
        double* dst = &out.data[r * k];
        std::copy(layer.bias.begin(), layer.bias.end(), dst);
        for (std::size_t i = 0; i < m; ++i) {
            const double a = in.data[r * m + i];
            if (a == 0.0) continue;
            const double* w = &layer.weight.data[i * k];
            for (std::size_t c = 0; c < k; ++c) dst[c] += a * w[c];
        }
    }
}

double activate(Activation act, double z) { return act == Activation::ReLU ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

double activate_grad(Activation act, double z) {
    if (act == Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

// grad.weight += inᵀ · delta, grad.bias += Σ_rows delta
void accumulate_layer_grad(const Matrix& in, const Matrix& delta, DenseLayer& grad) {
    const std::size_t n = in.rows, m = in.cols, k = delta.cols;
    for (std::size_t r = 0; r < n; ++r) {
        const double* d = &delta.data[r * k];
        for (std::size_t i = 0; i < m; ++i) {
            const double a = in.data[r * m + i];
            if (a == 0.0) continue;
            double* g = &grad.weight.data[i * k];
            for (std::size_t c = 0; c < k; ++c) g[c] += a * d[c];
        }
        for (std::size_t c = 0; c < k; ++c) grad.bias[c] += d[c];
    }
}

// out += delta · Wᵀ
void propagate_back(const Matrix& delta, const DenseLayer& layer, Matrix& out) {
    const std::size_t n = delta.rows, m = layer.weight.rows, k = layer.weight.cols;
    for (std::size_t r = 0; r < n; ++r) {
        const double* d = &delta.data[r * k];
        double* o = &out.data[r * m];
        for (std::size_t i = 0; i < m; ++i) {
            const double* w = &layer.weight.data[i * k];
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c) acc += d[c] * w[c];
            o[i] += acc;
        }
    }
}

void write_le_doubles(std::ostream& out, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

std::vector<double> read_le_doubles(std::istream& in) {
    std::vector<double> values;
    unsigned char bytes[8];
    while (in.read(reinterpret_cast<char*>(bytes), 8)) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
        values.push_back(std::bit_cast<double>(bits));
    }
    if (in.gcount() != 0) throw ConfigError("parameter blob length is not a multiple of 8 bytes");
    return values;
}

}  // namespace

std::string to_string(Activation act) { return act == Activation::ReLU ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
    if (name == "relu" || name == "ReLU") return Activation::ReLU;
    if (name == "tanh" || name == "Tanh") return Activation::Tanh;
    throw ConfigError("unknown activation: " + name);
}

void MoeArchitecture::validate() const {
    if (d_in < 1) throw ConfigError("arch: d_in must be >= 1");
    if (num_classes < 2) throw ConfigError("arch: C must be >= 2");
    if (num_experts < 1) throw ConfigError("arch: K must be >= 1");
    for (std::size_t w : hidden)
        if (w == 0) throw ConfigError("arch: hidden widths must be positive");
}

// ---------------------------------------------------------------------------
// MoeParams

std::size_t MoeParams::parameter_count() const {
    std::size_t n = 0;
    for_each_layer(*this, [&](const DenseLayer& l) { n += l.weight.data.size() + l.bias.size(); });
    return n;
}

MoeParams MoeParams::zeros_like() const {
    MoeParams out = *this;
    for_each_layer(out, [](DenseLayer& l) {
        std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    });
    return out;
}

void MoeParams::axpy(double scale, const MoeParams& other) {
    if (backbone.size() != other.backbone.size() || heads.size() != other.heads.size())
        throw ContractViolation("axpy: parameter structure mismatch");
    auto apply = [scale](DenseLayer& dst, const DenseLayer& src) {
        if (dst.weight.data.size() != src.weight.data.size() || dst.bias.size() != src.bias.size())
            throw ContractViolation("axpy: layer shape mismatch");
        for (std::size_t i = 0; i < dst.weight.data.size(); ++i) dst.weight.data[i] += scale * src.weight.data[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += scale * src.bias[i];
    };
    for (std::size_t l = 0; l < backbone.size(); ++l) apply(backbone[l], other.backbone[l]);
    for (std::size_t l = 0; l < heads.size(); ++l) apply(heads[l], other.heads[l]);
}

void MoeParams::scale(double factor) {
    for_each_layer(*this, [factor](DenseLayer& l) {
        for (double& v : l.weight.data) v *= factor;
        for (double& v : l.bias) v *= factor;
    });
}

bool MoeParams::all_finite() const {
    bool ok = true;
    for_each_layer(*this, [&](const DenseLayer& l) {
        ok = ok && std::all_of(l.weight.data.begin(), l.weight.data.end(), [](double v) { return std::isfinite(v); });
        ok = ok && std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); });
    });
    return ok;
}

std::vector<double> MoeParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for_each_layer(*this, [&](const DenseLayer& l) {
        flat.insert(flat.end(), l.weight.data.begin(), l.weight.data.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    });
    return flat;
}

void MoeParams::assign_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw ContractViolation("assign_flat: size mismatch");
    std::size_t pos = 0;
    for_each_layer(*this, [&](DenseLayer& l) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.data.size(), l.weight.data.begin());
        pos += l.weight.data.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
        pos += l.bias.size();
    });
}

// ---------------------------------------------------------------------------
// Construction and evaluation

MoeParams zero_params(const MoeArchitecture& arch) {
    arch.validate();
    MoeParams p;
    std::size_t fan_in = arch.d_in;
    for (std::size_t width : arch.hidden) {
        p.backbone.push_back(make_layer(fan_in, width));
        fan_in = width;
    }
    for (std::size_t k = 0; k < arch.num_experts; ++k) p.heads.push_back(make_layer(fan_in, arch.num_classes));
    return p;
}

MoeParams init_params(const MoeArchitecture& arch, std::uint64_t seed) {
    MoeParams p = zero_params(arch);
    Rng rng(seed);
    for_each_layer(p, [&](DenseLayer& l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.rows));
        for (double& w : l.weight.data) w = rng.uniform(-bound, bound);
    });
    return p;
}

ExpertLogits forward(const MoeParams& params, const MoeArchitecture& arch, const Matrix& x, ForwardTrace* trace) {
    if (x.cols != arch.d_in) throw ContractViolation("forward: input width does not match d_in");
    if (params.backbone.size() != arch.hidden.size() || params.heads.size() != arch.num_experts)
        throw ContractViolation("forward: parameters do not match the architecture");

    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    t.inputs.clear();
    t.pre_activation.clear();

    Matrix current = x;
    for (const auto& layer : params.backbone) {
        Matrix pre;
        affine(current, layer, pre);
        Matrix post = pre;
        for (double& v : post.data) v = activate(arch.activation, v);
        if (trace) {
            t.inputs.push_back(std::move(current));
            t.pre_activation.push_back(std::move(pre));
        }
        current = std::move(post);
    }

    ExpertLogits out;
    out.batch = x.rows;
    out.num_experts = arch.num_experts;
    out.num_classes = arch.num_classes;
    out.values.assign(out.batch * out.num_experts * out.num_classes, 0.0);
    Matrix head_out;
    for (std::size_t k = 0; k < arch.num_experts; ++k) {
        affine(current, params.heads[k], head_out);
        for (std::size_t b = 0; b < out.batch; ++b) {
            const auto src = head_out.row(b);
            std::copy(src.begin(), src.end(), out.row(b, k).begin());
        }
    }
    t.representation = std::move(current);
    return out;
}

Matrix representation(const MoeParams& params, const MoeArchitecture& arch, const Matrix& x) {
    ForwardTrace trace;
    forward(params, arch, x, &trace);
    return std::move(trace.representation);
}

MoeParams backward(const MoeParams& params, const MoeArchitecture& arch, const ForwardTrace& trace,
                   const ExpertLogits& grad_logits) {
    const std::size_t batch = grad_logits.batch;
    if (grad_logits.num_experts != arch.num_experts || grad_logits.num_classes != arch.num_classes ||
        trace.representation.rows != batch || trace.inputs.size() != params.backbone.size())
        throw ContractViolation("backward: gradient and trace shapes disagree");

    MoeParams grad = params.zeros_like();
    Matrix d_rep(batch, trace.representation.cols);
    Matrix delta(batch, arch.num_classes);
    for (std::size_t k = 0; k < arch.num_experts; ++k) {
        for (std::size_t b = 0; b < batch; ++b) {
            const auto src = grad_logits.row(b, k);
            std::copy(src.begin(), src.end(), delta.row(b).begin());
        }
        accumulate_layer_grad(trace.representation, delta, grad.heads[k]);
        propagate_back(delta, params.heads[k], d_rep);
    }

    Matrix d_post = std::move(d_rep);
    for (std::size_t l = params.backbone.size(); l-- > 0;) {
        const Matrix& pre = trace.pre_activation[l];
        Matrix d_pre = d_post;
        for (std::size_t i = 0; i < d_pre.data.size(); ++i) d_pre.data[i] *= activate_grad(arch.activation, pre.data[i]);
        accumulate_layer_grad(trace.inputs[l], d_pre, grad.backbone[l]);
        if (l > 0) {
            d_post = Matrix(batch, trace.inputs[l].cols);
            propagate_back(d_pre, params.backbone[l], d_post);
        }
    }
    return grad;
}

std::size_t predict_expert(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const MoeArchitecture& arch) {
    j = {{"d_in", arch.d_in},
         {"hidden", arch.hidden},
         {"C", arch.num_classes},
         {"K", arch.num_experts},
         {"activation", to_string(arch.activation)}};
}

void from_json(const nlohmann::json& j, MoeArchitecture& arch) {
    arch.d_in = j.at("d_in").get<std::size_t>();
    arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    arch.num_classes = j.at("C").get<std::size_t>();
    arch.num_experts = j.at("K").get<std::size_t>();
    arch.activation = activation_from_string(j.at("activation").get<std::string>());
}

void save_checkpoint(const fs::path& manifest_path, const MoeParams& params, const MoeArchitecture& arch,
                     std::uint64_t seed) {
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    fs::path blob_path = manifest_path;
    blob_path.replace_extension(".bin");

    nlohmann::json manifest = {
        {"arch", arch},
        {"seed", seed},
        {"blob", blob_path.filename().string()},
        {"dtype", "float64-le"},
        {"parameter_count", params.parameter_count()},
        {"layout", "backbone layers in order, then heads 0..K-1; per layer weight (fan_in x fan_out, row-major) then bias"}};
    {
        std::ofstream out(manifest_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint manifest: " + manifest_path.string());
        out << manifest.dump(2) << '\n';
    }
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write parameter blob: " + blob_path.string());
    write_le_doubles(blob, params.flatten());
}

Checkpoint load_checkpoint(const fs::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw MissingArtifact("checkpoint not found: " + manifest_path.string());
    const auto manifest = nlohmann::json::parse(in);
    Checkpoint ckpt;
    ckpt.arch = manifest.at("arch").get<MoeArchitecture>();
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.params = zero_params(ckpt.arch);

    const fs::path blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw MissingArtifact("parameter blob not found: " + blob_path.string());
    const auto flat = read_le_doubles(blob);
    if (flat.size() != ckpt.params.parameter_count())
        throw ConfigError("parameter blob size does not match the architecture");
    ckpt.params.assign_flat(flat);
    return ckpt;
}

}  // namespace dirmixe
