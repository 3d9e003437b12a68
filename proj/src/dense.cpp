#include "popo/dense.hpp"

#include <cmath>

#include "popo/errors.hpp"

namespace popo::detail {

std::size_t dense_param_count(const std::vector<int>& dims) {
    if (dims.size() < 2) throw ConfigError("dense stack needs at least one layer");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] < 1 || dims[l + 1] < 1)
            throw ConfigError("dense layer widths must be >= 1");
        n += static_cast<std::size_t>(dims[l + 1]) * static_cast<std::size_t>(dims[l]);
        n += static_cast<std::size_t>(dims[l + 1]);
    }
    return n;
}

std::vector<double> dense_init_uniform(const std::vector<int>& dims,
                                       std::uint64_t seed, StreamPurpose purpose) {
    std::vector<double> v(dense_param_count(dims), 0.0);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double scale = std::sqrt(6.0 / (fan_in + fan_out));
        RngStream rng(seed, purpose, 0, static_cast<std::uint64_t>(l));
        for (int i = 0; i < fan_out * fan_in; ++i)
            v[off + static_cast<std::size_t>(i)] = scale * (2.0 * rng.uniform() - 1.0);
        off += static_cast<std::size_t>(fan_out) * static_cast<std::size_t>(fan_in);
        off += static_cast<std::size_t>(fan_out); // biases stay zero
    }
    return v;
}

std::vector<double> dense_forward(const std::vector<int>& dims, const double* values,
                                  const std::vector<double>& input,
                                  std::vector<std::vector<double>>* acts) {
    const std::size_t layers = dims.size() - 1;
    if (input.size() != static_cast<std::size_t>(dims[0]))
        throw ShapeError("dense input size " + std::to_string(input.size()) +
                         " != " + std::to_string(dims[0]));
    if (acts) {
        acts->clear();
        acts->push_back(input);
    }
    std::vector<double> a = input;
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const int in = dims[l];
        const int out = dims[l + 1];
        std::vector<double> z(static_cast<std::size_t>(out));
        const double* w = values + off;
        const double* b = values + off + static_cast<std::size_t>(out) * in;
        for (int i = 0; i < out; ++i) {
            double s = b[i];
            const double* wrow = w + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) s += wrow[j] * a[static_cast<std::size_t>(j)];
            z[static_cast<std::size_t>(i)] = s;
        }
        off += static_cast<std::size_t>(out) * in + static_cast<std::size_t>(out);
        if (l + 1 < layers) {
            for (double& x : z) x = std::tanh(x);
            if (acts) acts->push_back(z);
        }
        a = std::move(z);
    }
    return a;
}

void dense_backward(const std::vector<int>& dims, const double* values,
                    const std::vector<std::vector<double>>& acts,
                    const std::vector<double>& grad_out,
                    const std::vector<double>& tap_grad,
                    double* grad_values, std::vector<double>* grad_input) {
    const std::size_t layers = dims.size() - 1;
    if (acts.size() != layers)
        throw ShapeError("dense backward expects one cached activation per layer");
    if (grad_out.size() != static_cast<std::size_t>(dims[layers]))
        throw ShapeError("dense grad_out size mismatch");
    if (!tap_grad.empty() &&
        tap_grad.size() != static_cast<std::size_t>(dims[layers - 1]))
        throw ShapeError("dense tap_grad size mismatch");

    // Per-layer flat offsets, front to back.
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        off += static_cast<std::size_t>(dims[l + 1]) * dims[l] +
               static_cast<std::size_t>(dims[l + 1]);
    }

    std::vector<double> d = grad_out; // gradient at layer output (pre-activation: final layer is linear)
    for (std::size_t l = layers; l-- > 0;) {
        const int in = dims[l];
        const int out = dims[l + 1];
        const double* w = values + offsets[l];
        const std::vector<double>& x = acts[l];
        if (grad_values) {
            double* gw = grad_values + offsets[l];
            double* gb = gw + static_cast<std::size_t>(out) * in;
            for (int i = 0; i < out; ++i) {
                const double di = d[static_cast<std::size_t>(i)];
                double* gwrow = gw + static_cast<std::size_t>(i) * in;
                for (int j = 0; j < in; ++j) gwrow[j] += di * x[static_cast<std::size_t>(j)];
                gb[i] += di;
            }
        }
        const bool need_dx = l > 0 || grad_input != nullptr;
        if (!need_dx) break;
        std::vector<double> dx(static_cast<std::size_t>(in), 0.0);
        for (int i = 0; i < out; ++i) {
            const double di = d[static_cast<std::size_t>(i)];
            const double* wrow = w + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) dx[static_cast<std::size_t>(j)] += wrow[j] * di;
        }
        if (l == layers - 1 && !tap_grad.empty())
            for (int j = 0; j < in; ++j) dx[static_cast<std::size_t>(j)] += tap_grad[static_cast<std::size_t>(j)];
        if (l > 0) {
            // x = acts[l] is the post-tanh output of layer l-1: dtanh = 1 - x^2.
            for (int j = 0; j < in; ++j)
                dx[static_cast<std::size_t>(j)] *= 1.0 - x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
        }
        d = std::move(dx);
    }
    if (grad_input) *grad_input = std::move(d);
}

} // namespace popo::detail
