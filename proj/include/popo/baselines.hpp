#pragma once

#include <string>
#include <vector>

#include "popo/policy.hpp"
#include "popo/popo_loss.hpp"
#include "popo/taskenv.hpp"

namespace popo {

enum class Algo {
    grpo,
    dr_grpo,
    popo,
    popo_uniform,
    popo_with_neg_weighted,
    popo_with_neg_uniform,
    sft_positive,
};

Algo algo_from_string(const std::string& name);
std::string algo_to_string(Algo algo);
bool is_popo_family(Algo algo);

struct GroupAdvantage {
    std::vector<int> rewards;
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> advantages;
};

struct BaselineConfig {
    Algo algo = Algo::popo;
    double clip_eps = 0.2;
    double kl_coef = 0.01;
    double eps_std = 1e-8;
};

/// (r - mean)/(std + eps_std) for grpo, r - mean for dr_grpo. All-equal
/// rewards give all-zero advantages, making the group a no-op.
GroupAdvantage group_advantages(const std::vector<int>& rewards, Algo mode,
                                double eps_std);

/// Exact KL(p || q) over the enumerated space; 0 log 0 = 0.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

/// Mean over samples of -min(rho*A, clip(rho, 1-eps, 1+eps)*A) with
/// rho = new/old, plus kl_coef * KL(new || ref). Single inner iteration, so
/// at update time old = current and the clip never binds.
double grpo_loss(const std::vector<double>& old_probs,
                 const std::vector<double>& new_probs,
                 const std::vector<int>& sampled, const GroupAdvantage& adv,
                 const std::vector<double>& ref_probs, double clip_eps,
                 double kl_coef);

/// d grpo_loss / d z over the current policy's logits.
std::vector<double> grpo_grad_logits(const PolicyOutput& output,
                                     const std::vector<double>& old_probs,
                                     const std::vector<int>& sampled,
                                     const GroupAdvantage& adv,
                                     const std::vector<double>& ref_probs,
                                     double clip_eps, double kl_coef);

/// The POPO-family ablations, routed through the same loss engine:
/// popo                    self-normalized weights over S+
/// popo_uniform            uniform weights over S+
/// popo_with_neg_weighted  self-normalized weights over S+ u S-
/// popo_with_neg_uniform   uniform weights over S+ u S-
/// sft_positive            uniform over S+, alpha and beta forced to 0
/// The similarity term always weights over S+ only (its target pairs exist
/// only for positives); union modes therefore reuse the POPO weights there.
std::vector<int> ablation_support(Algo algo, const Partition& partition);
WeightMode ablation_weight_mode(Algo algo);

LossBreakdown ablation_loss(const BaselineConfig& config, const PolicyOutput& output,
                            const Partition& partition, const SimInputs* sim,
                            double alpha, double beta, RngStream* rng,
                            SimLossResult* sim_detail = nullptr);

std::vector<double> ablation_grad_logits(const BaselineConfig& config,
                                         const PolicyOutput& output,
                                         const Partition& partition, double alpha,
                                         double beta,
                                         const std::vector<double>* sim_cos_per_positive,
                                         bool detach_weights = false);

} // namespace popo
