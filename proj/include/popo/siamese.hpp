#pragma once

#include <cstdint>
#include <vector>

#include "popo/policy.hpp"
#include "popo/rng.hpp"

namespace popo {

/// EMA copy xi of the online policy plus the per-iteration parameter-gap
/// trace. grad_norm_max tracks the largest clipped gradient norm seen, the
/// G_max that makes the gap bound literally true of the implemented
/// recurrence.
struct SiameseState {
    PolicyParams xi;
    double tau = 0.999;
    std::vector<double> gap_trace;
    double grad_norm_max = 0.0;
};

/// xi <- theta0, so gap_trace starts at exactly 0. tau in [0,1): tau = 0
/// (siamese pinned to the policy) is a supported ablation, tau = 1 is
/// rejected because the gap bound diverges.
SiameseState make_siamese(const PolicyParams& theta0, double tau);

/// xi' = tau*xi + (1-tau)*theta elementwise; appends ||theta - xi'|| to
/// gap_trace. Call once per iteration, after the (possibly skipped) policy
/// update.
void ema_update(SiameseState& state, const PolicyParams& theta);

/// tau * lr * grad_norm_max / (1 - tau).
double bound_rhs(const SiameseState& state, double lr);

/// Predictor head h_phi: dense stack d_repr -> hidden^(depth-1) -> d_repr,
/// tanh between layers, linear output.
struct PredictorParams {
    std::vector<int> dims;
    std::vector<double> values;

    int repr_dim() const { return dims.empty() ? 0 : dims.front(); }
    int depth() const { return static_cast<int>(dims.size()) - 1; }
};

PredictorParams make_predictor(int repr_dim, int hidden_dim, int depth,
                               std::uint64_t seed);

/// Single linear layer with W = I, b = 0; h_phi(x) = x. Used by tests that
/// need the cosine geometry undisturbed.
PredictorParams make_identity_predictor(int repr_dim);

std::vector<double> predictor_forward(const PredictorParams& predictor,
                                      const std::vector<double>& input);

/// Everything the similarity term produces. No gradient for xi exists here:
/// the target branch is behind a stop-gradient.
struct SimLossResult {
    double value = 0.0;
    std::vector<double> grad_repr_online;
    std::vector<double> grad_predictor;
    /// cos(h_phi(f_theta), f_xi + eps_y) per positive, in the order the
    /// weights were given; the chain term for differentiating the loss
    /// through the self-normalized weights.
    std::vector<double> cos_per_positive;
};

/// One noise vector per positive, each of length d_repr, scaled by sigma.
std::vector<std::vector<double>> draw_sim_noise(int n_positives, int repr_dim,
                                                double sigma, RngStream& rng);

/// value = -sum_y w_y * cos(h_phi(repr_online), repr_target + noise_y).
/// weights must sum to 1 over the positives. The frozen-noise form is the
/// primitive; gradient oracles difference it directly. denom_guard <= 0
/// disables the cosine guard, making zero norms a numeric error.
SimLossResult similarity_loss(const std::vector<double>& repr_online,
                              const std::vector<double>& repr_target,
                              const PredictorParams& predictor,
                              const std::vector<double>& weights,
                              const std::vector<std::vector<double>>& noise,
                              double denom_guard = 1e-12);

/// Draws fresh noise from the stream, then evaluates the frozen form.
SimLossResult similarity_loss(const std::vector<double>& repr_online,
                              const std::vector<double>& repr_target,
                              const PredictorParams& predictor,
                              const std::vector<double>& weights,
                              double sigma, RngStream& rng,
                              double denom_guard = 1e-12);

} // namespace popo
