#include "popo/siamese.hpp"

#include <cmath>

#include "popo/dense.hpp"
#include "popo/errors.hpp"

namespace popo {

SiameseState make_siamese(const PolicyParams& theta0, double tau) {
    if (tau < 0.0 || tau >= 1.0)
        throw ConfigError("tau must lie in [0,1); the gap bound diverges at tau = 1");
    SiameseState s;
    s.xi = theta0;
    s.tau = tau;
    s.gap_trace.push_back(0.0);
    return s;
}

void ema_update(SiameseState& state, const PolicyParams& theta) {
    if (state.xi.values.size() != theta.values.size() || state.xi.mode != theta.mode)
        throw ShapeError("siamese xi not shape-congruent with theta");
    const double tau = state.tau;
    double gap_sq = 0.0;
    for (std::size_t i = 0; i < theta.values.size(); ++i) {
        const double xi_next = tau * state.xi.values[i] + (1.0 - tau) * theta.values[i];
        state.xi.values[i] = xi_next;
        const double d = theta.values[i] - xi_next;
        gap_sq += d * d;
    }
    state.gap_trace.push_back(std::sqrt(gap_sq));
}

double bound_rhs(const SiameseState& state, double lr) {
    if (lr <= 0.0) throw ConfigError("learning rate must be > 0");
    if (!std::isfinite(state.grad_norm_max))
        throw NumericError("grad_norm_max is not finite");
    if (state.tau >= 1.0) throw ConfigError("gap bound diverges at tau = 1");
    return state.tau * lr * state.grad_norm_max / (1.0 - state.tau);
}

PredictorParams make_predictor(int repr_dim, int hidden_dim, int depth,
                               std::uint64_t seed) {
    if (repr_dim < 1) throw ConfigError("predictor repr_dim must be >= 1");
    if (depth < 1) throw ConfigError("predictor depth must be >= 1");
    if (depth > 1 && hidden_dim < 1)
        throw ConfigError("predictor hidden_dim must be >= 1");
    PredictorParams p;
    p.dims.push_back(repr_dim);
    for (int l = 1; l < depth; ++l) p.dims.push_back(hidden_dim);
    p.dims.push_back(repr_dim);
    p.values = detail::dense_init_uniform(p.dims, seed, StreamPurpose::predictor_init);
    return p;
}

PredictorParams make_identity_predictor(int repr_dim) {
    if (repr_dim < 1) throw ConfigError("predictor repr_dim must be >= 1");
    PredictorParams p;
    p.dims = {repr_dim, repr_dim};
    p.values.assign(detail::dense_param_count(p.dims), 0.0);
    for (int i = 0; i < repr_dim; ++i)
        p.values[static_cast<std::size_t>(i) * repr_dim + i] = 1.0;
    return p;
}

std::vector<double> predictor_forward(const PredictorParams& predictor,
                                      const std::vector<double>& input) {
    return detail::dense_forward(predictor.dims, predictor.values.data(), input, nullptr);
}

std::vector<std::vector<double>> draw_sim_noise(int n_positives, int repr_dim,
                                                double sigma, RngStream& rng) {
    if (n_positives < 1) throw ContractViolation("noise requested for zero positives");
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    std::vector<std::vector<double>> noise(static_cast<std::size_t>(n_positives));
    for (auto& eps : noise) {
        eps.resize(static_cast<std::size_t>(repr_dim));
        for (auto& e : eps) e = sigma * rng.normal();
    }
    return noise;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

SimLossResult similarity_loss(const std::vector<double>& repr_online,
                              const std::vector<double>& repr_target,
                              const PredictorParams& predictor,
                              const std::vector<double>& weights,
                              const std::vector<std::vector<double>>& noise,
                              double denom_guard) {
    const std::size_t d = repr_online.size();
    if (repr_target.size() != d) throw ShapeError("online/target representation dims differ");
    if (predictor.repr_dim() != static_cast<int>(d))
        throw ShapeError("predictor repr_dim does not match representations");
    if (weights.size() != noise.size())
        throw ShapeError("one noise vector per positive weight required");
    if (weights.empty()) throw ContractViolation("similarity loss over empty positive set");
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9)
        throw ContractViolation("similarity weights must sum to 1 over the positive set");

    std::vector<std::vector<double>> acts;
    const std::vector<double> p =
        detail::dense_forward(predictor.dims, predictor.values.data(), repr_online, &acts);
    const double pnorm = std::sqrt(dot(p, p));

    SimLossResult res;
    res.cos_per_positive.resize(weights.size());
    std::vector<double> grad_p(d, 0.0); // dL/d h_phi(f_theta)
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (noise[i].size() != d) throw ShapeError("noise vector dim mismatch");
        std::vector<double> t(d);
        for (std::size_t j = 0; j < d; ++j) t[j] = repr_target[j] + noise[i][j];
        const double tnorm = std::sqrt(dot(t, t));
        double denom = pnorm * tnorm;
        const bool guarded = denom < denom_guard;
        if (guarded) {
            denom = denom_guard;
        } else if (denom <= 0.0) {
            throw NumericError("zero-norm vector in cosine with guard disabled");
        }
        const double pt = dot(p, t);
        const double c = pt / denom;
        res.cos_per_positive[i] = c;
        res.value -= weights[i] * c;
        // d cos/d p = t/denom - c*p/||p||^2; the second term vanishes when
        // the guard is pinning the denominator (d denom/d p = 0 there).
        const double wi = weights[i];
        for (std::size_t j = 0; j < d; ++j) {
            double g = t[j] / denom;
            if (!guarded) g -= c * p[j] / (pnorm * pnorm);
            grad_p[j] -= wi * g;
        }
    }

    res.grad_predictor.assign(predictor.values.size(), 0.0);
    res.grad_repr_online.assign(d, 0.0);
    detail::dense_backward(predictor.dims, predictor.values.data(), acts, grad_p,
                           {}, res.grad_predictor.data(), &res.grad_repr_online);
    return res;
}

SimLossResult similarity_loss(const std::vector<double>& repr_online,
                              const std::vector<double>& repr_target,
                              const PredictorParams& predictor,
                              const std::vector<double>& weights,
                              double sigma, RngStream& rng, double denom_guard) {
    const auto noise = draw_sim_noise(static_cast<int>(weights.size()),
                                      static_cast<int>(repr_online.size()), sigma, rng);
    return similarity_loss(repr_online, repr_target, predictor, weights, noise, denom_guard);
}

} // namespace popo
