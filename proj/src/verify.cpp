#include "popo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "popo/baselines.hpp"
#include "popo/errors.hpp"
#include "popo/policy.hpp"
#include "popo/popo_loss.hpp"
#include "popo/rng.hpp"
#include "popo/siamese.hpp"

namespace popo {

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& at,
                                const FDOracleConfig& cfg) {
    if (cfg.h <= 0.0) throw ConfigError("finite-difference step must be > 0");
    std::vector<double> g(at.size());
    std::vector<double> x = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        x[i] = at[i] + cfg.h;
        const double fp = f(x);
        x[i] = at[i] - cfg.h;
        const double fm = f(x);
        x[i] = at[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("non-finite evaluation while differencing coordinate " +
                               std::to_string(i));
        g[i] = (fp - fm) / (2.0 * cfg.h);
    }
    return g;
}

namespace {

/// A random tabular instance: logits ~ N(0,2), K in {2..16}, positive set
/// neither empty nor the full space, the whole response space sampled.
struct RandInst {
    TaskInstance task;
    std::vector<double> logits;
    Partition part;
    PolicyOutput out;
};

PolicyOutput forward_logits(const std::vector<double>& logits, const TaskInstance& task) {
    PolicyParams p = make_tabular_policy(1, task.response_count);
    p.values = logits;
    return forward(p, task);
}

RandInst random_instance(RngStream& rng, int kmin = 2, int kmax = 16) {
    RandInst ri;
    const int k = kmin + static_cast<int>(rng.below(static_cast<std::uint64_t>(kmax - kmin + 1)));
    ri.logits.resize(static_cast<std::size_t>(k));
    for (double& z : ri.logits) z = 2.0 * rng.normal();
    std::vector<int> pos;
    while (pos.empty() || static_cast<int>(pos.size()) == k) {
        pos.clear();
        for (int y = 0; y < k; ++y)
            if (rng.uniform() < 0.5) pos.push_back(y);
    }
    ri.task.prompt_id = 0;
    ri.task.response_count = k;
    ri.task.correct_set = pos;
    for (int y = 0; y < k; ++y)
        (ri.task.is_correct(y) ? ri.part.positives : ri.part.negatives).push_back(y);
    ri.out = forward_logits(ri.logits, ri.task);
    return ri;
}

double sign_threshold(double beta, double entropy) {
    return std::exp(-1.0 / beta - entropy);
}

constexpr double kBetas[] = {0.0, 0.01, 0.1, 1.0};

struct Worst {
    double value = 0.0;
    void track(double v) { value = std::max(value, std::abs(v)); }
};

CheckResult check_softmax_jacobian(std::uint64_t seed, int n) {
    CheckResult r{"softmax_jacobian", false, 0.0, n, ""};
    Worst w;
    FDOracleConfig fd;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 1, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const int k = ri.task.response_count;
        for (int y = 0; y < k; ++y) {
            const auto oracle = fd_gradient(
                [&](const std::vector<double>& z) {
                    return forward_logits(z, ri.task).probs[static_cast<std::size_t>(y)];
                },
                ri.logits, fd);
            for (int yp = 0; yp < k; ++yp) {
                const double py = ri.out.probs[static_cast<std::size_t>(y)];
                const double pyp = ri.out.probs[static_cast<std::size_t>(yp)];
                const double analytic = py * ((y == yp ? 1.0 : 0.0) - pyp);
                w.track(analytic - oracle[static_cast<std::size_t>(yp)]);
            }
        }
    }
    r.worst_case = w.value;
    r.passed = w.value <= 1e-7;
    return r;
}

CheckResult check_log_softmax_derivative(std::uint64_t seed, int n) {
    CheckResult r{"log_softmax_derivative", false, 0.0, n, ""};
    Worst w;
    FDOracleConfig fd;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 2, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const int k = ri.task.response_count;
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        const auto oracle = fd_gradient(
            [&](const std::vector<double>& z) {
                return forward_logits(z, ri.task).logprobs[static_cast<std::size_t>(y)];
            },
            ri.logits, fd);
        for (int yp = 0; yp < k; ++yp) {
            const double analytic =
                (y == yp ? 1.0 : 0.0) - ri.out.probs[static_cast<std::size_t>(yp)];
            w.track(analytic - oracle[static_cast<std::size_t>(yp)]);
        }
    }
    r.worst_case = w.value;
    r.passed = w.value <= 1e-7;
    return r;
}

CheckResult check_weight_invariance(std::uint64_t seed, int n) {
    CheckResult r{"weight_invariance", false, 0.0, n, ""};
    Worst analytic_worst, fd_worst;
    double contrast = 0.0; // largest |dw/dz_positive| seen; must be generically nonzero
    FDOracleConfig fd;
    fd.h = 1e-5;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 3, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const int yneg = ri.part.negatives[static_cast<std::size_t>(
            rng.below(ri.part.negatives.size()))];
        const auto jac =
            weight_jacobian_wrt_negative(ri.out.probs, ri.part.positives, yneg);
        for (double j : jac) analytic_worst.track(j);
        // Finite-difference each positive's weight w.r.t. the negative logit,
        // and w.r.t. a positive logit for the contrast case.
        const int ypos = ri.part.positives[static_cast<std::size_t>(
            rng.below(ri.part.positives.size()))];
        for (std::size_t pi = 0; pi < ri.part.positives.size(); ++pi) {
            const auto wfn = [&](const std::vector<double>& z) {
                const PolicyOutput o = forward_logits(z, ri.task);
                return positive_weights(o.probs, ri.part.positives).weights[pi];
            };
            const auto g = fd_gradient(wfn, ri.logits, fd);
            fd_worst.track(g[static_cast<std::size_t>(yneg)]);
            if (ri.part.positives.size() >= 2)
                contrast = std::max(contrast, std::abs(g[static_cast<std::size_t>(ypos)]));
        }
    }
    r.worst_case = analytic_worst.value;
    r.passed = analytic_worst.value <= 1e-15 && fd_worst.value <= 1e-6 && contrast > 1e-6;
    std::ostringstream d;
    d << "analytic " << analytic_worst.value << ", fd " << fd_worst.value
      << ", positive-logit contrast " << contrast;
    r.details = d.str();
    return r;
}

CheckResult check_nll_tax(std::uint64_t seed, int n, Fault fault) {
    CheckResult r{"nll_tax", false, 0.0, n, ""};
    Worst w;
    FDOracleConfig fd;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 4, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const auto g = grad_logits(ri.out, ri.part, 0.0, 0.0, nullptr);
        const auto oracle = fd_gradient(
            [&](const std::vector<double>& z) {
                const PolicyOutput o = forward_logits(z, ri.task);
                return weighted_nll_value(o, ri.part.positives, WeightMode::self_normalized);
            },
            ri.logits, fd);
        for (int yp : ri.part.negatives) {
            double analytic = g[static_cast<std::size_t>(yp)];
            if (fault == Fault::drop_nll_tax) analytic -= ri.out.probs[static_cast<std::size_t>(yp)];
            w.track(analytic - ri.out.probs[static_cast<std::size_t>(yp)]);
            w.track(analytic - oracle[static_cast<std::size_t>(yp)]);
        }
    }
    r.worst_case = w.value;
    r.passed = w.value <= 1e-8;
    return r;
}

CheckResult check_entropy_gradient(std::uint64_t seed, int n) {
    CheckResult r{"entropy_gradient", false, 0.0, n, ""};
    Worst w;
    FDOracleConfig fd;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 5, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const auto analytic = entropy_grad(ri.out);
        const auto oracle = fd_gradient(
            [&](const std::vector<double>& z) { return -forward_logits(z, ri.task).entropy; },
            ri.logits, fd);
        for (std::size_t y = 0; y < analytic.size(); ++y)
            w.track(analytic[y] - oracle[y]);
    }
    r.worst_case = w.value;
    r.passed = w.value <= 1e-8;
    return r;
}

CheckResult check_negative_grad_closed_form(std::uint64_t seed, int n, Fault fault) {
    CheckResult r{"negative_grad_closed_form", false, 0.0, n, ""};
    Worst closed_worst, fd_worst;
    FDOracleConfig fd;
    const bool detach = fault == Fault::detach_weights;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 6, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const double beta = kBetas[i % 4];
        const auto g = grad_logits(ri.out, ri.part, 0.0, beta, nullptr, detach);
        for (int yp : ri.part.negatives) {
            double cf = implicit_negative_grad(ri.out.probs, ri.out.entropy, yp, beta);
            if (fault == Fault::flip_closed_form_sign) cf = -cf;
            closed_worst.track(g[static_cast<std::size_t>(yp)] - cf);
        }
        const auto oracle = fd_gradient(
            [&](const std::vector<double>& z) {
                const PolicyOutput o = forward_logits(z, ri.task);
                return weighted_nll_value(o, ri.part.positives, WeightMode::self_normalized) +
                       beta * -o.entropy;
            },
            ri.logits, fd);
        for (std::size_t y = 0; y < oracle.size(); ++y)
            fd_worst.track(g[y] - oracle[y]);
    }
    r.worst_case = std::max(closed_worst.value, fd_worst.value);
    r.passed = closed_worst.value <= 1e-10 && fd_worst.value <= 1e-7;
    std::ostringstream d;
    d << "closed-form " << closed_worst.value << ", fd " << fd_worst.value;
    r.details = d.str();
    return r;
}

CheckResult check_sign_threshold(std::uint64_t seed, int n) {
    CheckResult r{"sign_threshold", false, 0.0, n, ""};
    bool signs_ok = true;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 7, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const double beta = kBetas[1 + i % 3]; // positive betas only
        for (int yp : ri.part.negatives) {
            const double p = ri.out.probs[static_cast<std::size_t>(yp)];
            const double thr = sign_threshold(beta, ri.out.entropy);
            if (std::abs(p - thr) <= 1e-12) continue;
            const double g = implicit_negative_grad(ri.out.probs, ri.out.entropy, yp, beta);
            if ((g > 0.0) != (p > thr)) signs_ok = false;
        }
    }

    // Bracket the zero crossing: K=3, logits [2, 0, u], beta = 2; the last
    // response's probability crosses exp(-1/beta - H) as u sweeps [0, 5].
    const double beta = 2.0;
    TaskInstance task;
    task.prompt_id = 0;
    task.response_count = 3;
    task.correct_set = {0};
    const auto margin = [&](double u) {
        const PolicyOutput o = forward_logits({2.0, 0.0, u}, task);
        return o.probs[2] - sign_threshold(beta, o.entropy);
    };
    double lo = 0.0, hi = 5.0;
    if (!(margin(lo) < 0.0 && margin(hi) > 0.0)) {
        r.details = "bracket construction failed";
        return r;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (margin(mid) < 0.0 ? lo : hi) = mid;
    }
    const double ustar = 0.5 * (lo + hi);
    const PolicyOutput o = forward_logits({2.0, 0.0, ustar}, task);
    const double crossing_gap = std::abs(o.probs[2] - sign_threshold(beta, o.entropy));
    const double grad_at_crossing =
        std::abs(implicit_negative_grad(o.probs, o.entropy, 2, beta));
    // Below-threshold side must be a genuinely negative gradient.
    const PolicyOutput below = forward_logits({2.0, 0.0, 0.0}, task);
    const double below_grad = implicit_negative_grad(below.probs, below.entropy, 2, beta);

    r.worst_case = std::max(crossing_gap, grad_at_crossing);
    r.passed = signs_ok && crossing_gap <= 1e-9 && grad_at_crossing <= 1e-9 &&
               below_grad < 0.0;
    std::ostringstream d;
    d << "crossing gap " << crossing_gap << ", grad at crossing " << grad_at_crossing
      << ", below-threshold grad " << below_grad << (signs_ok ? "" : ", sign mismatch");
    r.details = d.str();
    return r;
}

CheckResult check_sim_zero_on_negatives(std::uint64_t seed, int n) {
    CheckResult r{"sim_zero_on_negative_logits", false, 0.0, n, ""};
    Worst analytic_worst, fd_worst;
    double contrast = 0.0;
    FDOracleConfig fd;
    for (int i = 0; i < n; ++i) {
        RngStream rng(seed, StreamPurpose::check, 8, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const int k = ri.task.response_count;
        const PredictorParams pred = make_predictor(k, 8, 2, seed ^ 0x5151u);
        std::vector<double> online(static_cast<std::size_t>(k)), target(static_cast<std::size_t>(k));
        for (auto& v : online) v = rng.normal();
        for (auto& v : target) v = rng.normal();
        RngStream noise_rng(seed, StreamPurpose::sim_noise, 99, static_cast<std::uint64_t>(i));
        const auto noise = draw_sim_noise(static_cast<int>(ri.part.positives.size()), k,
                                          0.02, noise_rng);
        // The representations are frozen: only the weight path can reach the
        // logits, so the whole alignment term must be invisible to them.
        const auto simf = [&](const std::vector<double>& z) {
            const PolicyOutput o = forward_logits(z, ri.task);
            const PositiveWeights pw = positive_weights(o.probs, ri.part.positives);
            return similarity_loss(online, target, pred, pw.weights, noise).value;
        };
        const auto oracle = fd_gradient(simf, ri.logits, fd);
        const SimLossResult sr = similarity_loss(
            online, target, pred,
            positive_weights(ri.out.probs, ri.part.positives).weights, noise);
        const auto analytic =
            sim_chain_grad(ri.out.probs, ri.part.positives, sr.cos_per_positive, k);
        for (int yp : ri.part.negatives) {
            analytic_worst.track(analytic[static_cast<std::size_t>(yp)]);
            fd_worst.track(oracle[static_cast<std::size_t>(yp)]);
        }
        for (int yp : ri.part.positives) {
            fd_worst.track(analytic[static_cast<std::size_t>(yp)] -
                           oracle[static_cast<std::size_t>(yp)]);
            if (ri.part.positives.size() >= 2)
                contrast = std::max(contrast, std::abs(oracle[static_cast<std::size_t>(yp)]));
        }
    }
    r.worst_case = std::max(analytic_worst.value, fd_worst.value);
    r.passed = analytic_worst.value == 0.0 && fd_worst.value <= 1e-8 && contrast > 1e-8;
    std::ostringstream d;
    d << "analytic-on-negatives " << analytic_worst.value << ", fd " << fd_worst.value
      << ", positive-logit contrast " << contrast;
    r.details = d.str();
    return r;
}

/// Shared short tabular POPO run for the EMA recurrence and drift-bound checks.
struct ShortRun {
    double recurrence_worst = 0.0;
    double bound_margin_worst = -1e300; // max over t of gap - bound
    int iterations = 0;
};

ShortRun short_training_run(std::uint64_t seed) {
    const int iterations = 300;
    const int batch = 4;
    const int group = 8;
    const double lr = 0.05, tau = 0.99, clip = 1.0, beta = 0.01;
    TaskSet ts = generate_taskset(Family::multi_answer_divisibility, 8, seed);
    PolicyParams theta = make_tabular_policy(8, ts.instances[0].response_count);
    SiameseState st = make_siamese(theta, tau);
    ShortRun sr;
    sr.iterations = iterations;
    for (int t = 1; t <= iterations; ++t) {
        GradBuffer grads = make_grad_buffer(theta);
        RngStream prompt_rng(seed, StreamPurpose::prompt_sample,
                             static_cast<std::uint64_t>(t), 0);
        int with_pos = 0;
        std::vector<std::pair<PolicyOutput, Partition>> batch_parts;
        for (int b = 0; b < batch; ++b) {
            const auto& task = ts.instances[prompt_rng.below(ts.instances.size())];
            RngStream roll_rng(seed, StreamPurpose::rollout,
                               static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(b));
            const auto sampled = sample_group(theta, task, group, roll_rng);
            Partition part = partition_rollouts(task, sampled);
            if (part.positives.empty()) continue;
            ++with_pos;
            batch_parts.emplace_back(forward(theta, task), std::move(part));
        }
        PolicyParams theta_next = theta;
        if (with_pos > 0) {
            const double scale = 1.0 / with_pos;
            for (auto& [out, part] : batch_parts) {
                auto g = grad_logits(out, part, 0.0, beta, nullptr);
                for (auto& v : g) v *= scale;
                backward(theta, out, g, {}, grads);
            }
            double clipped_norm = 0.0;
            theta_next = sgd_step(theta, grads, lr, clip, &clipped_norm);
            st.grad_norm_max = std::max(st.grad_norm_max, clipped_norm);
        }
        // delta_{t+1} = tau * (delta_t + applied update), elementwise.
        std::vector<double> predicted(theta.values.size());
        for (std::size_t i = 0; i < theta.values.size(); ++i) {
            const double delta_t = theta.values[i] - st.xi.values[i];
            const double applied = theta_next.values[i] - theta.values[i];
            predicted[i] = tau * (delta_t + applied);
        }
        theta = std::move(theta_next);
        ema_update(st, theta);
        for (std::size_t i = 0; i < theta.values.size(); ++i) {
            const double observed = theta.values[i] - st.xi.values[i];
            sr.recurrence_worst =
                std::max(sr.recurrence_worst, std::abs(observed - predicted[i]));
        }
        const double bound = bound_rhs(st, lr);
        sr.bound_margin_worst =
            std::max(sr.bound_margin_worst, st.gap_trace.back() - bound);
    }
    return sr;
}

CheckResult check_ema_recurrence(std::uint64_t seed) {
    const ShortRun sr = short_training_run(seed);
    CheckResult r{"ema_recurrence", false, sr.recurrence_worst, sr.iterations, ""};
    r.passed = sr.recurrence_worst <= 1e-12;
    return r;
}

CheckResult check_ema_drift_bound(std::uint64_t seed) {
    const ShortRun sr = short_training_run(seed);
    CheckResult r{"ema_drift_bound", false, sr.bound_margin_worst, sr.iterations, ""};
    r.passed = sr.bound_margin_worst <= 1e-12;
    std::ostringstream d;
    d << "max(gap - bound) = " << sr.bound_margin_worst;
    r.details = d.str();
    return r;
}

CheckResult check_bound_example() {
    CheckResult r{"bound_numeric_example", false, 0.0, 1, ""};
    SiameseState st = make_siamese(make_tabular_policy(1, 2), 0.999);
    st.grad_norm_max = 1.0;
    const double b = bound_rhs(st, 1e-6);
    r.worst_case = std::abs(b - 9.99e-4);
    r.passed = r.worst_case <= 1e-12 && b < 1e-3;
    std::ostringstream d;
    d << "bound " << b << " (must stay < 1e-3)";
    r.details = d.str();
    return r;
}

CheckResult check_network_backward(std::uint64_t seed, int n) {
    const int instances = std::min(n, 100);
    CheckResult r{"network_backward_fd", false, 0.0, instances, ""};
    Worst w;
    FDOracleConfig fd;
    for (int i = 0; i < instances; ++i) {
        RngStream rng(seed, StreamPurpose::check, 10, static_cast<std::uint64_t>(i));
        const int k = 4 + static_cast<int>(rng.below(3));
        const int d_in = 5, d_repr = 6;
        PolicyParams params =
            make_network_policy({d_in, 7, d_repr, k}, seed ^ static_cast<std::uint64_t>(i));
        TaskInstance task;
        task.prompt_id = 0;
        task.response_count = k;
        task.features.resize(d_in);
        for (auto& f : task.features) f = rng.normal();
        Partition part;
        for (int y = 0; y < k; ++y)
            (rng.uniform() < 0.5 ? part.positives : part.negatives).push_back(y);
        if (part.positives.empty() || part.negatives.empty()) {
            part.positives = {0};
            part.negatives.clear();
            for (int y = 1; y < k; ++y) part.negatives.push_back(y);
        }
        task.correct_set = part.positives;

        const double beta = kBetas[i % 4];
        const bool with_sim = i % 2 == 1;
        const double alpha = with_sim ? 0.1 : 0.0;
        const PredictorParams pred = make_predictor(d_repr, 6, 2, seed ^ 0xabcu);
        std::vector<double> target(static_cast<std::size_t>(d_repr));
        for (auto& v : target) v = rng.normal();
        RngStream noise_rng(seed, StreamPurpose::sim_noise, 77, static_cast<std::uint64_t>(i));
        const auto noise = draw_sim_noise(static_cast<int>(part.positives.size()), d_repr,
                                          0.02, noise_rng);

        const auto lossf = [&](const std::vector<double>& v) {
            PolicyParams p = params;
            p.values = v;
            const PolicyOutput o = forward(p, task);
            double loss =
                weighted_nll_value(o, part.positives, WeightMode::self_normalized) +
                beta * -o.entropy;
            if (with_sim) {
                const PositiveWeights pw = positive_weights(o.probs, part.positives);
                loss += alpha *
                        similarity_loss(o.representation, target, pred, pw.weights, noise).value;
            }
            return loss;
        };

        const PolicyOutput out = forward(params, task);
        GradBuffer grads = make_grad_buffer(params);
        std::vector<double> grad_repr;
        SimLossResult sr;
        const std::vector<double>* cos_chain = nullptr;
        if (with_sim) {
            const PositiveWeights pw = positive_weights(out.probs, part.positives);
            sr = similarity_loss(out.representation, target, pred, pw.weights, noise);
            cos_chain = &sr.cos_per_positive;
            grad_repr.resize(sr.grad_repr_online.size());
            for (std::size_t j = 0; j < grad_repr.size(); ++j)
                grad_repr[j] = alpha * sr.grad_repr_online[j];
        }
        const auto gl = grad_logits(out, part, alpha, beta, cos_chain);
        backward(params, out, gl, grad_repr, grads);
        const auto oracle = fd_gradient(lossf, params.values, fd);
        for (std::size_t j = 0; j < oracle.size(); ++j) {
            const double diff = std::abs(grads.values[j] - oracle[j]);
            const double tol_slack = 1e-6 * std::abs(oracle[j]);
            w.track(std::max(0.0, diff - tol_slack));
        }
    }
    r.worst_case = w.value;
    r.passed = w.value <= 1e-7;
    return r;
}

CheckResult check_redistribution(std::uint64_t seed, int n) {
    const int instances = std::min(n, 500);
    CheckResult r{"redistribution", false, 0.0, instances, ""};
    int used = 0;
    bool ok = true;
    double worst_neg_delta = -1e300; // most positive negative-logit delta
    for (int i = 0; i < instances * 4 && used < instances; ++i) {
        RngStream rng(seed, StreamPurpose::check, 11, static_cast<std::uint64_t>(i));
        const RandInst ri = random_instance(rng);
        const double beta = kBetas[i % 4];
        if (beta > 0.0) {
            const double thr = sign_threshold(beta, ri.out.entropy);
            bool all_above = true;
            for (int yp : ri.part.negatives)
                if (ri.out.probs[static_cast<std::size_t>(yp)] <= thr + 1e-6) all_above = false;
            if (!all_above) continue;
        }
        ++used;
        const OneStepResult step =
            brute_force_one_step(ri.task, ri.logits, ri.part, 1e-4, beta);
        if (step.delta_pos_mass <= 0.0) ok = false;
        for (int yp : ri.part.negatives) {
            const double dz = step.delta_z[static_cast<std::size_t>(yp)];
            worst_neg_delta = std::max(worst_neg_delta, dz);
            if (dz >= 0.0) ok = false;
        }
    }
    r.instances_run = used;
    r.worst_case = worst_neg_delta;
    r.passed = ok && used >= instances / 2;
    std::ostringstream d;
    d << "largest negative-logit delta " << worst_neg_delta << " over " << used
      << " instances (all must be < 0)";
    r.details = d.str();
    return r;
}

} // namespace

OneStepResult brute_force_one_step(const TaskInstance& task,
                                   const std::vector<double>& logits,
                                   const Partition& partition, double lr,
                                   double beta) {
    if (partition.positives.empty())
        throw ContractViolation("one-step probe needs a nonempty positive set");
    const PolicyOutput before = forward_logits(logits, task);
    const auto g = grad_logits(before, partition, 0.0, beta, nullptr);
    OneStepResult res;
    res.delta_z.resize(logits.size());
    std::vector<double> znext(logits.size());
    for (std::size_t y = 0; y < logits.size(); ++y) {
        res.delta_z[y] = -lr * g[y];
        znext[y] = logits[y] + res.delta_z[y];
    }
    const PolicyOutput after = forward_logits(znext, task);
    double mass_before = 0.0, mass_after = 0.0;
    for (int y : partition.positives) {
        mass_before += before.probs[static_cast<std::size_t>(y)];
        mass_after += after.probs[static_cast<std::size_t>(y)];
    }
    res.delta_pos_mass = mass_after - mass_before;
    return res;
}

std::vector<CheckResult> run_check_suite(std::uint64_t seed, int n_instances,
                                         Fault fault) {
    if (n_instances < 1) throw ConfigError("check suite needs n_instances >= 1");
    std::vector<CheckResult> results;
    results.push_back(check_bound_example());
    results.push_back(check_ema_recurrence(seed));
    results.push_back(check_entropy_gradient(seed, n_instances));
    results.push_back(check_ema_drift_bound(seed));
    results.push_back(check_log_softmax_derivative(seed, n_instances));
    results.push_back(check_network_backward(seed, n_instances));
    results.push_back(check_nll_tax(seed, n_instances, fault));
    results.push_back(check_redistribution(seed, n_instances));
    results.push_back(check_sign_threshold(seed, n_instances));
    results.push_back(check_sim_zero_on_negatives(seed, std::min(n_instances, 200)));
    results.push_back(check_softmax_jacobian(seed, n_instances));
    results.push_back(check_negative_grad_closed_form(seed, n_instances, fault));
    results.push_back(check_weight_invariance(seed, std::min(n_instances, 300)));
    std::sort(results.begin(), results.end(),
              [](const CheckResult& a, const CheckResult& b) { return a.name < b.name; });
    return results;
}

bool all_checks_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

std::string check_report_json(const std::vector<CheckResult>& results) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json j;
        j["name"] = r.name;
        j["passed"] = r.passed;
        j["worst_case"] = r.worst_case;
        j["instances_run"] = r.instances_run;
        j["details"] = r.details;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

} // namespace popo
