#include "popo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "popo/dense.hpp"
#include "popo/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace popo {

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + " contains a non-finite value");
}

} // namespace

int PolicyParams::response_count() const {
    if (dims.size() < 2) throw ShapeError("policy dims not initialized");
    return dims.back();
}

int PolicyParams::repr_dim() const {
    if (mode == PolicyMode::tabular) return dims.back();
    return dims[dims.size() - 2];
}

PolicyParams make_tabular_policy(int prompts, int response_count, double init_logit) {
    if (prompts < 1) throw ConfigError("tabular policy needs >= 1 prompt row");
    if (response_count < 2) throw ConfigError("response_count must be >= 2");
    PolicyParams p;
    p.mode = PolicyMode::tabular;
    p.dims = {prompts, response_count};
    p.values.assign(static_cast<std::size_t>(prompts) * response_count, init_logit);
    return p;
}

PolicyParams make_network_policy(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 3)
        throw ConfigError("network policy needs at least one hidden layer: {in, hidden..., K}");
    PolicyParams p;
    p.mode = PolicyMode::network;
    p.dims = dims;
    p.values = detail::dense_init_uniform(dims, seed, StreamPurpose::policy_init);
    return p;
}

void GradBuffer::zero() { std::fill(values.begin(), values.end(), 0.0); }

double GradBuffer::global_norm() const {
    double s = 0.0;
    for (double x : values) s += x * x;
    return std::sqrt(s);
}

GradBuffer make_grad_buffer(const PolicyParams& params) {
    return GradBuffer(params.values.size());
}

PolicyOutput forward(const PolicyParams& params, const TaskInstance& task) {
    PolicyOutput out;
    out.prompt_id = task.prompt_id;
    const int k = task.response_count;
    if (params.response_count() != k)
        throw ShapeError("policy K=" + std::to_string(params.response_count()) +
                         " != task K=" + std::to_string(k));

    if (params.mode == PolicyMode::tabular) {
        if (task.prompt_id < 0 || task.prompt_id >= params.dims[0])
            throw ShapeError("prompt_id " + std::to_string(task.prompt_id) +
                             " outside tabular table with " + std::to_string(params.dims[0]) + " rows");
        const double* row = params.values.data() + static_cast<std::size_t>(task.prompt_id) * k;
        out.logits.assign(row, row + k);
    } else {
        if (task.features.size() != static_cast<std::size_t>(params.dims[0]))
            throw ShapeError("feature dim " + std::to_string(task.features.size()) +
                             " != network input dim " + std::to_string(params.dims[0]));
        out.logits = detail::dense_forward(params.dims, params.values.data(),
                                           task.features, &out.activations);
        out.representation = out.activations.back();
    }
    check_finite(out.logits, "logits");
    if (params.mode == PolicyMode::tabular) out.representation = out.logits;

    const double zmax = *std::max_element(out.logits.begin(), out.logits.end());
    double sum = 0.0;
    for (double z : out.logits) sum += std::exp(z - zmax);
    const double lse = std::log(sum);
    out.probs.resize(static_cast<std::size_t>(k));
    out.logprobs.resize(static_cast<std::size_t>(k));
    out.entropy = 0.0;
    for (int y = 0; y < k; ++y) {
        const double lp = out.logits[static_cast<std::size_t>(y)] - zmax - lse;
        const double p = std::exp(lp);
        out.logprobs[static_cast<std::size_t>(y)] = lp;
        out.probs[static_cast<std::size_t>(y)] = p;
        if (p > 0.0) out.entropy -= p * lp;
    }
    return out;
}

std::vector<int> sample_group(const PolicyParams& params, const TaskInstance& task,
                              int group_size, RngStream& rng) {
    if (group_size < 1) throw ConfigError("group size must be >= 1");
    const PolicyOutput out = forward(params, task);
    const int k = task.response_count;
    std::vector<int> samples(static_cast<std::size_t>(group_size));
    for (int g = 0; g < group_size; ++g) {
        const double u = rng.uniform();
        double cum = 0.0;
        int pick = k - 1; // fp fallthrough lands on the last index
        for (int y = 0; y < k; ++y) {
            cum += out.probs[static_cast<std::size_t>(y)];
            if (u < cum) {
                pick = y;
                break;
            }
        }
        samples[static_cast<std::size_t>(g)] = pick;
    }
    return samples;
}

void backward(const PolicyParams& params, const PolicyOutput& output,
              const std::vector<double>& grad_logits,
              const std::vector<double>& grad_repr, GradBuffer& acc) {
    const int k = params.response_count();
    if (grad_logits.size() != static_cast<std::size_t>(k))
        throw ShapeError("grad_logits size mismatch");
    if (!grad_repr.empty() &&
        grad_repr.size() != static_cast<std::size_t>(params.repr_dim()))
        throw ShapeError("grad_repr size mismatch");
    if (acc.values.size() != params.values.size())
        throw ShapeError("grad buffer not shape-congruent with params");

    if (params.mode == PolicyMode::tabular) {
        double* row = acc.values.data() + static_cast<std::size_t>(output.prompt_id) * k;
        for (int y = 0; y < k; ++y) {
            row[y] += grad_logits[static_cast<std::size_t>(y)];
            if (!grad_repr.empty()) row[y] += grad_repr[static_cast<std::size_t>(y)];
        }
        return;
    }
    detail::dense_backward(params.dims, params.values.data(), output.activations,
                           grad_logits, grad_repr, acc.values.data(), nullptr);
}

PolicyParams sgd_step(const PolicyParams& params, const GradBuffer& grads,
                      double lr, double clip, double* clipped_norm_out) {
    if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
    if (clip <= 0.0) throw ConfigError("gradient clip must be > 0");
    if (grads.values.size() != params.values.size())
        throw ShapeError("grad buffer not shape-congruent with params");
    const double norm = grads.global_norm();
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm; aborting step");
    const double scale = norm > clip ? clip / norm : 1.0;
    PolicyParams next = params;
    for (std::size_t i = 0; i < next.values.size(); ++i)
        next.values[i] -= lr * scale * grads.values[i];
    if (clipped_norm_out) *clipped_norm_out = norm * scale;
    return next;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint truncated");
    return v;
}

constexpr char kMagic[4] = {'P', 'O', 'P', 'O'};
constexpr std::uint32_t kVersion = 1;

} // namespace

void save_policy(const PolicyParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint8_t>(params.mode));
    write_pod(out, static_cast<std::uint32_t>(params.dims.size()));
    for (int d : params.dims) write_pod(out, static_cast<std::uint64_t>(d));
    write_pod(out, static_cast<std::uint64_t>(params.values.size()));
    out.write(reinterpret_cast<const char*>(params.values.data()),
              static_cast<std::streamsize>(params.values.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path);
}

PolicyParams load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a policy checkpoint: " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto mode = read_pod<std::uint8_t>(in);
    if (mode > 1) throw IoError("unknown policy mode in checkpoint");
    PolicyParams p;
    p.mode = static_cast<PolicyMode>(mode);
    const auto ndims = read_pod<std::uint32_t>(in);
    if (ndims < 2 || ndims > 64) throw IoError("implausible checkpoint shape table");
    p.dims.resize(ndims);
    for (auto& d : p.dims) d = static_cast<int>(read_pod<std::uint64_t>(in));
    const auto count = read_pod<std::uint64_t>(in);
    std::size_t expected = 0;
    if (p.mode == PolicyMode::tabular)
        expected = static_cast<std::size_t>(p.dims[0]) * static_cast<std::size_t>(p.dims[1]);
    else
        expected = detail::dense_param_count(p.dims);
    if (count != expected) throw IoError("checkpoint value count does not match shape table");
    p.values.resize(count);
    in.read(reinterpret_cast<char*>(p.values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("checkpoint truncated");
    return p;
}

} // namespace popo
