#include "popo/baselines.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "popo/errors.hpp"

namespace popo {

Algo algo_from_string(const std::string& name) {
    if (name == "grpo") return Algo::grpo;
    if (name == "dr_grpo") return Algo::dr_grpo;
    if (name == "popo") return Algo::popo;
    if (name == "popo_uniform") return Algo::popo_uniform;
    if (name == "popo_with_neg_weighted") return Algo::popo_with_neg_weighted;
    if (name == "popo_with_neg_uniform") return Algo::popo_with_neg_uniform;
    if (name == "sft_positive") return Algo::sft_positive;
    throw ConfigError("unknown algo: " + name);
}

std::string algo_to_string(Algo algo) {
    switch (algo) {
        case Algo::grpo: return "grpo";
        case Algo::dr_grpo: return "dr_grpo";
        case Algo::popo: return "popo";
        case Algo::popo_uniform: return "popo_uniform";
        case Algo::popo_with_neg_weighted: return "popo_with_neg_weighted";
        case Algo::popo_with_neg_uniform: return "popo_with_neg_uniform";
        case Algo::sft_positive: return "sft_positive";
    }
    throw ConfigError("unknown algo enum value");
}

bool is_popo_family(Algo algo) {
    return algo != Algo::grpo && algo != Algo::dr_grpo;
}

GroupAdvantage group_advantages(const std::vector<int>& rewards, Algo mode,
                                double eps_std) {
    if (rewards.size() < 2)
        throw ConfigError("group advantages need a group of >= 2 rollouts");
    if (mode != Algo::grpo && mode != Algo::dr_grpo)
        throw ConfigError("advantage mode must be grpo or dr_grpo");
    GroupAdvantage ga;
    ga.rewards = rewards;
    double sum = 0.0;
    for (int r : rewards) sum += r;
    ga.mean = sum / static_cast<double>(rewards.size());
    double var = 0.0;
    for (int r : rewards) {
        const double d = r - ga.mean;
        var += d * d;
    }
    ga.stddev = std::sqrt(var / static_cast<double>(rewards.size()));
    ga.advantages.reserve(rewards.size());
    for (int r : rewards) {
        double a = r - ga.mean;
        if (mode == Algo::grpo) a /= ga.stddev + eps_std;
        ga.advantages.push_back(a);
    }
    return ga;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeError("KL over mismatched supports");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] < DBL_MIN)
            throw NumericError("KL undefined: reference gives zero mass where policy does not");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

namespace {

void check_grpo_inputs(const std::vector<double>& old_probs,
                       const std::vector<double>& new_probs,
                       const std::vector<int>& sampled, const GroupAdvantage& adv,
                       const std::vector<double>& ref_probs) {
    if (old_probs.size() != new_probs.size() || old_probs.size() != ref_probs.size())
        throw ShapeError("grpo probability vectors must share one support");
    if (sampled.size() != adv.advantages.size())
        throw ShapeError("one advantage per sampled rollout required");
    if (sampled.empty()) throw ContractViolation("grpo loss over zero samples");
    for (int y : sampled) {
        if (y < 0 || y >= static_cast<int>(old_probs.size()))
            throw DomainError("sampled index out of range");
        if (old_probs[static_cast<std::size_t>(y)] < DBL_MIN)
            throw NumericError("sampled response has zero old probability");
    }
}

} // namespace

double grpo_loss(const std::vector<double>& old_probs,
                 const std::vector<double>& new_probs,
                 const std::vector<int>& sampled, const GroupAdvantage& adv,
                 const std::vector<double>& ref_probs, double clip_eps,
                 double kl_coef) {
    check_grpo_inputs(old_probs, new_probs, sampled, adv, ref_probs);
    if (clip_eps <= 0.0) throw ConfigError("clip_eps must be > 0");
    double sum = 0.0;
    for (std::size_t j = 0; j < sampled.size(); ++j) {
        const std::size_t y = static_cast<std::size_t>(sampled[j]);
        const double rho = new_probs[y] / old_probs[y];
        const double a = adv.advantages[j];
        const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
        sum -= std::min(rho * a, clipped * a);
    }
    double loss = sum / static_cast<double>(sampled.size());
    if (kl_coef != 0.0) loss += kl_coef * kl_divergence(new_probs, ref_probs);
    return loss;
}

std::vector<double> grpo_grad_logits(const PolicyOutput& output,
                                     const std::vector<double>& old_probs,
                                     const std::vector<int>& sampled,
                                     const GroupAdvantage& adv,
                                     const std::vector<double>& ref_probs,
                                     double clip_eps, double kl_coef) {
    check_grpo_inputs(old_probs, output.probs, sampled, adv, ref_probs);
    if (clip_eps <= 0.0) throw ConfigError("clip_eps must be > 0");
    const std::size_t k = output.probs.size();
    std::vector<double> g(k, 0.0);
    const double inv_n = 1.0 / static_cast<double>(sampled.size());
    for (std::size_t j = 0; j < sampled.size(); ++j) {
        const std::size_t yj = static_cast<std::size_t>(sampled[j]);
        const double a = adv.advantages[j];
        if (a == 0.0) continue;
        const double rho = output.probs[yj] / old_probs[yj];
        const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
        // Subgradient of -min(rho*A, clip(rho)*A): ties take the unclipped
        // branch (the rho = 1 first-pass case).
        double drho_coef; // d term / d rho
        if (rho * a <= clipped * a) {
            drho_coef = -a;
        } else {
            const bool interior = rho > 1.0 - clip_eps && rho < 1.0 + clip_eps;
            drho_coef = interior ? -a : 0.0;
        }
        if (drho_coef == 0.0) continue;
        // d rho/d z_k = p_yj (delta_{yj,k} - p_k) / old_yj
        const double scale = inv_n * drho_coef * output.probs[yj] / old_probs[yj];
        for (std::size_t i = 0; i < k; ++i) g[i] -= scale * output.probs[i];
        g[yj] += scale;
    }
    if (kl_coef != 0.0) {
        const double kl = kl_divergence(output.probs, ref_probs);
        for (std::size_t i = 0; i < k; ++i) {
            const double p = output.probs[i];
            if (p <= 0.0) continue;
            g[i] += kl_coef * p * (std::log(p / ref_probs[i]) - kl);
        }
    }
    return g;
}

std::vector<int> ablation_support(Algo algo, const Partition& partition) {
    switch (algo) {
        case Algo::popo:
        case Algo::popo_uniform:
        case Algo::sft_positive:
            return partition.positives;
        case Algo::popo_with_neg_weighted:
        case Algo::popo_with_neg_uniform: {
            std::vector<int> support = partition.positives;
            support.insert(support.end(), partition.negatives.begin(),
                           partition.negatives.end());
            std::sort(support.begin(), support.end());
            return support;
        }
        default:
            throw ConfigError("ablation support undefined for " + algo_to_string(algo));
    }
}

WeightMode ablation_weight_mode(Algo algo) {
    switch (algo) {
        case Algo::popo:
        case Algo::popo_with_neg_weighted:
            return WeightMode::self_normalized;
        case Algo::popo_uniform:
        case Algo::popo_with_neg_uniform:
        case Algo::sft_positive:
            return WeightMode::uniform;
        default:
            throw ConfigError("ablation weight mode undefined for " + algo_to_string(algo));
    }
}

LossBreakdown ablation_loss(const BaselineConfig& config, const PolicyOutput& output,
                            const Partition& partition, const SimInputs* sim,
                            double alpha, double beta, RngStream* rng,
                            SimLossResult* sim_detail) {
    if (partition.positives.empty())
        throw ContractViolation("ablation loss on a prompt with no positives");
    if (config.algo == Algo::sft_positive) {
        alpha = 0.0;
        beta = 0.0;
        sim = nullptr;
    }
    const std::vector<int> support = ablation_support(config.algo, partition);
    LossBreakdown lb;
    lb.alpha = alpha;
    lb.beta = beta;
    lb.nll = weighted_nll_value(output, support, ablation_weight_mode(config.algo));
    lb.ent = -output.entropy;
    if (sim) {
        if (!sim->predictor) throw ConfigError("similarity inputs missing a predictor");
        std::vector<double> sim_weights;
        if (ablation_weight_mode(config.algo) == WeightMode::self_normalized) {
            sim_weights = positive_weights(output.probs, partition.positives).weights;
        } else {
            sim_weights.assign(partition.positives.size(),
                               1.0 / static_cast<double>(partition.positives.size()));
        }
        SimLossResult sr;
        if (sim->frozen_noise) {
            sr = similarity_loss(output.representation, sim->repr_target,
                                 *sim->predictor, sim_weights, *sim->frozen_noise);
        } else {
            if (!rng) throw ConfigError("similarity noise needs a stream or frozen draw");
            sr = similarity_loss(output.representation, sim->repr_target,
                                 *sim->predictor, sim_weights, sim->sigma, *rng);
        }
        lb.sim = sr.value;
        if (sim_detail) *sim_detail = std::move(sr);
    }
    lb.total = lb.nll + alpha * lb.sim + beta * lb.ent;
    return lb;
}

std::vector<double> ablation_grad_logits(const BaselineConfig& config,
                                         const PolicyOutput& output,
                                         const Partition& partition, double alpha,
                                         double beta,
                                         const std::vector<double>* sim_cos_per_positive,
                                         bool detach_weights) {
    if (partition.positives.empty())
        throw ContractViolation("ablation gradient on a prompt with no positives");
    if (config.algo == Algo::sft_positive) {
        alpha = 0.0;
        beta = 0.0;
        sim_cos_per_positive = nullptr;
    }
    const std::vector<int> support = ablation_support(config.algo, partition);
    const WeightMode mode = ablation_weight_mode(config.algo);
    std::vector<double> g = weighted_nll_grad(output, support, mode, detach_weights);
    if (beta != 0.0) {
        const std::vector<double> ge = entropy_grad(output);
        for (std::size_t y = 0; y < g.size(); ++y) g[y] += beta * ge[y];
    }
    // The weight-path of the similarity term exists only when the sim
    // weights are the live self-normalized ones.
    if (sim_cos_per_positive && alpha != 0.0 &&
        mode == WeightMode::self_normalized && !detach_weights) {
        const std::vector<double> gs =
            sim_chain_grad(output.probs, partition.positives, *sim_cos_per_positive,
                           static_cast<int>(output.probs.size()));
        for (std::size_t y = 0; y < g.size(); ++y) g[y] += alpha * gs[y];
    }
    return g;
}

} // namespace popo
