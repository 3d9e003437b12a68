#include "popo/popo_loss.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "popo/errors.hpp"

namespace popo {

PositiveWeights positive_weights(const std::vector<double>& probs,
                                 const std::vector<int>& positives) {
    if (positives.empty())
        throw ContractViolation("positive_weights on empty positive set; "
                                "the training loop skips such prompts");
    PositiveWeights pw;
    pw.positives = positives;
    std::sort(pw.positives.begin(), pw.positives.end());
    double z = 0.0;
    for (int y : pw.positives) {
        if (y < 0 || y >= static_cast<int>(probs.size()))
            throw DomainError("positive index out of range");
        z += probs[static_cast<std::size_t>(y)];
    }
    if (z < DBL_MIN)
        throw NumericError("positive mass underflowed to zero; weights undefined");
    pw.z_plus = z;
    pw.weights.reserve(pw.positives.size());
    for (int y : pw.positives)
        pw.weights.push_back(probs[static_cast<std::size_t>(y)] / z);
    return pw;
}

double weighted_nll(const std::vector<double>& probs, const PositiveWeights& pw) {
    double nll = 0.0;
    for (std::size_t i = 0; i < pw.positives.size(); ++i) {
        const double p = probs[static_cast<std::size_t>(pw.positives[i])];
        if (p < DBL_MIN) throw NumericError("positive with zero probability in NLL");
        nll -= pw.weights[i] * std::log(p);
    }
    return nll;
}

double weighted_nll_value(const PolicyOutput& output,
                          const std::vector<int>& support, WeightMode mode) {
    if (support.empty()) throw ContractViolation("NLL over empty support");
    double value = 0.0;
    if (mode == WeightMode::uniform) {
        for (int y : support) value -= output.logprobs[static_cast<std::size_t>(y)];
        return value / static_cast<double>(support.size());
    }
    const PositiveWeights pw = positive_weights(output.probs, support);
    for (std::size_t i = 0; i < pw.positives.size(); ++i)
        value -= pw.weights[i] * output.logprobs[static_cast<std::size_t>(pw.positives[i])];
    return value;
}

std::vector<double> weighted_nll_grad(const PolicyOutput& output,
                                      const std::vector<int>& support,
                                      WeightMode mode, bool detach_weights) {
    if (support.empty()) throw ContractViolation("NLL gradient over empty support");
    const int k = static_cast<int>(output.probs.size());
    // Every logit pays the probability tax pi(y'); in-support logits get the
    // mode-specific correction on top.
    std::vector<double> g = output.probs;
    if (mode == WeightMode::uniform) {
        const double w = 1.0 / static_cast<double>(support.size());
        for (int y : support) {
            if (y < 0 || y >= k) throw DomainError("support index out of range");
            g[static_cast<std::size_t>(y)] -= w;
        }
        return g;
    }
    const PositiveWeights pw = positive_weights(output.probs, support);
    if (detach_weights) {
        for (std::size_t i = 0; i < pw.positives.size(); ++i)
            g[static_cast<std::size_t>(pw.positives[i])] -= pw.weights[i];
        return g;
    }
    double mean_lp = 0.0; // <omega, log pi> over the support
    for (std::size_t i = 0; i < pw.positives.size(); ++i)
        mean_lp += pw.weights[i] * output.logprobs[static_cast<std::size_t>(pw.positives[i])];
    for (std::size_t i = 0; i < pw.positives.size(); ++i) {
        const std::size_t y = static_cast<std::size_t>(pw.positives[i]);
        const double w = pw.weights[i];
        g[y] += -w * (output.logprobs[y] - mean_lp) - w;
    }
    return g;
}

std::vector<double> entropy_grad(const PolicyOutput& output) {
    const int k = static_cast<int>(output.probs.size());
    std::vector<double> g(static_cast<std::size_t>(k), 0.0);
    for (int y = 0; y < k; ++y) {
        const double p = output.probs[static_cast<std::size_t>(y)];
        if (p > 0.0)
            g[static_cast<std::size_t>(y)] =
                p * (output.logprobs[static_cast<std::size_t>(y)] + output.entropy);
    }
    return g;
}

std::vector<double> sim_chain_grad(const std::vector<double>& probs,
                                   const std::vector<int>& positives,
                                   const std::vector<double>& cos_per_positive,
                                   int response_count) {
    if (cos_per_positive.size() != positives.size())
        throw ShapeError("one cosine per positive required");
    const PositiveWeights pw = positive_weights(probs, positives);
    double wc = 0.0;
    for (std::size_t i = 0; i < pw.weights.size(); ++i)
        wc += pw.weights[i] * cos_per_positive[i];
    std::vector<double> g(static_cast<std::size_t>(response_count), 0.0);
    for (std::size_t i = 0; i < pw.positives.size(); ++i)
        g[static_cast<std::size_t>(pw.positives[i])] =
            pw.weights[i] * (wc - cos_per_positive[i]);
    return g;
}

LossBreakdown total_loss(const PolicyOutput& output, const Partition& partition,
                         const SimInputs* sim, double alpha, double beta,
                         RngStream* rng, SimLossResult* sim_detail) {
    if (partition.positives.empty())
        throw ContractViolation("total_loss on a prompt with no positives");
    LossBreakdown lb;
    lb.alpha = alpha;
    lb.beta = beta;
    lb.nll = weighted_nll_value(output, partition.positives, WeightMode::self_normalized);
    lb.ent = -output.entropy;
    if (sim) {
        if (!sim->predictor) throw ConfigError("similarity inputs missing a predictor");
        const PositiveWeights pw = positive_weights(output.probs, partition.positives);
        SimLossResult sr;
        if (sim->frozen_noise) {
            sr = similarity_loss(output.representation, sim->repr_target,
                                 *sim->predictor, pw.weights, *sim->frozen_noise);
        } else {
            if (!rng) throw ConfigError("similarity noise needs a stream or frozen draw");
            sr = similarity_loss(output.representation, sim->repr_target,
                                 *sim->predictor, pw.weights, sim->sigma, *rng);
        }
        lb.sim = sr.value;
        if (sim_detail) *sim_detail = std::move(sr);
    }
    lb.total = lb.nll + alpha * lb.sim + beta * lb.ent;
    return lb;
}

std::vector<double> grad_logits(const PolicyOutput& output, const Partition& partition,
                                double alpha, double beta,
                                const std::vector<double>* sim_cos_per_positive,
                                bool detach_weights) {
    if (partition.positives.empty())
        throw ContractViolation("grad_logits on a prompt with no positives");
    std::vector<double> g = weighted_nll_grad(output, partition.positives,
                                              WeightMode::self_normalized, detach_weights);
    if (beta != 0.0) {
        const std::vector<double> ge = entropy_grad(output);
        for (std::size_t y = 0; y < g.size(); ++y) g[y] += beta * ge[y];
    }
    if (sim_cos_per_positive && !detach_weights && alpha != 0.0) {
        const std::vector<double> gs =
            sim_chain_grad(output.probs, partition.positives, *sim_cos_per_positive,
                           static_cast<int>(output.probs.size()));
        for (std::size_t y = 0; y < g.size(); ++y) g[y] += alpha * gs[y];
    }
    return g;
}

double implicit_negative_grad(const std::vector<double>& probs, double entropy,
                              int y_prime, double beta) {
    if (y_prime < 0 || y_prime >= static_cast<int>(probs.size()))
        throw DomainError("y_prime out of range");
    const double p = probs[static_cast<std::size_t>(y_prime)];
    if (p <= 0.0) return 0.0; // continuous extension: p log p -> 0
    return p * (1.0 + beta * (std::log(p) + entropy));
}

std::vector<double> weight_jacobian_wrt_negative(const std::vector<double>& probs,
                                                 const std::vector<int>& positives,
                                                 int y_prime) {
    const PositiveWeights pw = positive_weights(probs, positives);
    if (std::binary_search(pw.positives.begin(), pw.positives.end(), y_prime))
        throw ContractViolation("weight invariance identity applies to negatives only");
    if (y_prime < 0 || y_prime >= static_cast<int>(probs.size()))
        throw DomainError("y_prime out of range");
    const double pprime = probs[static_cast<std::size_t>(y_prime)];
    std::vector<double> jac(pw.positives.size());
    for (std::size_t i = 0; i < pw.positives.size(); ++i) {
        const double py = probs[static_cast<std::size_t>(pw.positives[i])];
        // Quotient rule, both terms written out: d(p_y)/dz' * Z+ minus
        // p_y * d(Z+)/dz', over Z+^2. The terms are equal, so this is the
        // proved cancellation, not a hardcoded zero.
        const double term1 = (-py * pprime) * pw.z_plus;
        const double term2 = py * (-pw.z_plus * pprime);
        jac[i] = (term1 - term2) / (pw.z_plus * pw.z_plus);
    }
    return jac;
}

} // namespace popo
