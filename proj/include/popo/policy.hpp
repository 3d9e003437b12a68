#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "popo/rng.hpp"
#include "popo/taskenv.hpp"

namespace popo {

enum class PolicyMode : std::uint8_t { tabular = 0, network = 1 };

/// Softmax policy over the enumerated response space. Parameters live in one
/// flat vector so global-norm clipping and the EMA parameter gap are plain
/// vector operations.
///
/// tabular: values is a prompts x K logit table, row-major; the logits ARE
/// the parameters (identity parameterization), and the representation is the
/// logit row itself.
/// network: values is a dense stack (see dense.hpp) with dims
/// {feature_dim, hidden..., d_repr, K}; the representation is the last
/// hidden activation, shared across responses. Hidden activations do not
/// depend on the output logits, which is what makes the similarity term
/// contribute nothing to any logit gradient.
struct PolicyParams {
    PolicyMode mode = PolicyMode::tabular;
    std::vector<int> dims; // tabular: {prompts, K}; network: layer widths
    std::vector<double> values;

    int response_count() const;
    int repr_dim() const;
    std::size_t size() const { return values.size(); }
};

PolicyParams make_tabular_policy(int prompts, int response_count,
                                 double init_logit = 0.0);

/// dims = {feature_dim, hidden..., d_repr, K}; at least one hidden layer.
PolicyParams make_network_policy(const std::vector<int>& dims, std::uint64_t seed);

struct PolicyOutput {
    int prompt_id = 0;
    std::vector<double> logits;
    std::vector<double> probs;
    std::vector<double> logprobs;
    double entropy = 0.0;
    std::vector<double> representation;
    // Cached layer inputs for backward (network mode only).
    std::vector<std::vector<double>> activations;
};

struct GradBuffer {
    std::vector<double> values;

    explicit GradBuffer(std::size_t n = 0) : values(n, 0.0) {}
    void zero();
    double global_norm() const;
};

GradBuffer make_grad_buffer(const PolicyParams& params);

/// Exact softmax via the max-shift trick; log-probabilities carry the
/// information even when a probability underflows to zero.
PolicyOutput forward(const PolicyParams& params, const TaskInstance& task);

/// G i.i.d. inverse-CDF draws from forward(params, task).probs.
std::vector<int> sample_group(const PolicyParams& params, const TaskInstance& task,
                              int group_size, RngStream& rng);

/// Accumulates (+=) the exact reverse-mode gradient into `acc`. grad_logits
/// is dL/dz; grad_repr (may be empty) is dL/d(representation). Tabular mode
/// adds both into the prompt's row, since there the representation is the
/// logit row.
void backward(const PolicyParams& params, const PolicyOutput& output,
              const std::vector<double>& grad_logits,
              const std::vector<double>& grad_repr, GradBuffer& acc);

/// Global-norm clip to `clip`, then theta' = theta - lr * g. Returns new
/// params; reports the clipped gradient norm (the drift bound's driving term)
/// through clipped_norm_out when non-null.
PolicyParams sgd_step(const PolicyParams& params, const GradBuffer& grads,
                      double lr, double clip, double* clipped_norm_out = nullptr);

/// Flat binary checkpoint: magic "POPO", version u32, mode u8, u32 ndims,
/// ndims x u64 shape, u64 count, count x f64, all little-endian.
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

} // namespace popo
