#pragma once

#include <vector>

#include "popo/policy.hpp"
#include "popo/siamese.hpp"
#include "popo/taskenv.hpp"

namespace popo {

/// Self-normalized weights over the positive set: w_y = pi(y)/Z+, Z+ the
/// total positive probability mass.
struct PositiveWeights {
    std::vector<int> positives; // sorted ascending
    std::vector<double> weights; // aligned with positives; sums to 1
    double z_plus = 0.0;
};

PositiveWeights positive_weights(const std::vector<double>& probs,
                                 const std::vector<int>& positives);

/// -sum_y w_y log pi(y) over the positive set.
double weighted_nll(const std::vector<double>& probs, const PositiveWeights& pw);

struct LossBreakdown {
    double nll = 0.0;
    double sim = 0.0;
    double ent = 0.0; // -H: minimizing adds entropy
    double total = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

/// Target-branch inputs for the similarity term. frozen_noise, when set,
/// bypasses the stream draw so gradient oracles difference a deterministic
/// closure.
struct SimInputs {
    std::vector<double> repr_target;
    const PredictorParams* predictor = nullptr;
    double sigma = 0.0;
    const std::vector<std::vector<double>>* frozen_noise = nullptr;
};

/// total = nll + alpha*sim + beta*ent for one prompt. sim = 0 when `sim` is
/// null. sim_detail, when non-null, receives the similarity gradients and
/// per-positive cosines for the caller's backward pass.
LossBreakdown total_loss(const PolicyOutput& output, const Partition& partition,
                         const SimInputs* sim, double alpha, double beta,
                         RngStream* rng, SimLossResult* sim_detail = nullptr);

/// How the NLL weighting treats the chosen support.
enum class WeightMode { self_normalized, uniform };

/// d(-sum_{y in S} omega_y log pi(y))/dz over all K logits, S = `support`.
/// self_normalized differentiates through omega by the full product rule
/// unless detach_weights; for y' outside S the result is the probability
/// tax pi(y') in every mode.
std::vector<double> weighted_nll_grad(const PolicyOutput& output,
                                      const std::vector<int>& support,
                                      WeightMode mode, bool detach_weights);

double weighted_nll_value(const PolicyOutput& output,
                          const std::vector<int>& support, WeightMode mode);

/// d(-H)/dz_y' = pi(y')(log pi(y') + H).
std::vector<double> entropy_grad(const PolicyOutput& output);

/// The weight-path gradient of -sum_y w_y c_y with the cosines held fixed:
/// w_y'(<w,c> - c_y') on positives, exactly zero on negatives.
std::vector<double> sim_chain_grad(const std::vector<double>& probs,
                                   const std::vector<int>& positives,
                                   const std::vector<double>& cos_per_positive,
                                   int response_count);

/// Full POPO gradient w.r.t. the logits: NLL (product rule unless
/// detach_weights) + beta * entropy + alpha * weight-path of the similarity
/// term (pass sim_cos_per_positive = null when no sim term is active; the
/// representation path reaches the parameters through policy::backward, not
/// through the logits).
std::vector<double> grad_logits(const PolicyOutput& output, const Partition& partition,
                                double alpha, double beta,
                                const std::vector<double>* sim_cos_per_positive,
                                bool detach_weights = false);

/// Closed form for a negative response's gradient: pi(y')[1 + beta(log pi(y') + H)]
/// response y'.
double implicit_negative_grad(const std::vector<double>& probs, double entropy,
                              int y_prime, double beta);

/// dw_y/dz_{y'} for y' a negative, via the quotient rule term-by-term; the
/// two terms cancel exactly, so every entry is zero to machine precision.
std::vector<double> weight_jacobian_wrt_negative(const std::vector<double>& probs,
                                                 const std::vector<int>& positives,
                                                 int y_prime);

} // namespace popo
