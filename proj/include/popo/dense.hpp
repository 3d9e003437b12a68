#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "popo/rng.hpp"

namespace popo::detail {

/// Flat-storage dense stack: dims = {d_0, ..., d_L}, layer l maps d_l ->
/// d_{l+1} with weights row-major then bias, tanh between layers, linear
/// final layer. All modules store parameters as one flat vector so global
/// norms (clipping, the EMA gap) are single dot products.
std::size_t dense_param_count(const std::vector<int>& dims);

std::vector<double> dense_init_uniform(const std::vector<int>& dims,
                                       std::uint64_t seed, StreamPurpose purpose);

/// acts, if non-null, receives the input to each layer: acts[0] = input,
/// acts[l] = post-tanh output of layer l-1. Returns the final linear output.
std::vector<double> dense_forward(const std::vector<int>& dims, const double* values,
                                  const std::vector<double>& input,
                                  std::vector<std::vector<double>>* acts);

/// Reverse-mode pass. grad_out is w.r.t. the final linear output. tap_grad
/// (empty to skip) is an extra gradient injected at the input of the final
/// layer — the representation tap. grad_values accumulates (+=) when
/// non-null; grad_input is overwritten when non-null.
void dense_backward(const std::vector<int>& dims, const double* values,
                    const std::vector<std::vector<double>>& acts,
                    const std::vector<double>& grad_out,
                    const std::vector<double>& tap_grad,
                    double* grad_values, std::vector<double>* grad_input);

} // namespace popo::detail
