#include "popo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "popo/errors.hpp"
#include "popo/popo_loss.hpp"
#include "popo/rng.hpp"
#include "popo/siamese.hpp"

namespace popo {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string mode_to_string(PolicyMode mode) {
    return mode == PolicyMode::tabular ? "tabular" : "network";
}

PolicyMode mode_from_string(const std::string& s) {
    if (s == "tabular") return PolicyMode::tabular;
    if (s == "network") return PolicyMode::network;
    throw ConfigError("unknown policy mode: " + s);
}

void validate(const TrainConfig& c) {
    if (c.task_size < 1) throw ConfigError("task.size must be >= 1");
    if (c.group_size < 1) throw ConfigError("group_size must be >= 1");
    if ((c.algo.algo == Algo::grpo || c.algo.algo == Algo::dr_grpo) && c.group_size < 2)
        throw ConfigError("grpo needs group_size >= 2 for group advantages");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.iterations < 0) throw ConfigError("iterations must be >= 0");
    if (c.lr <= 0.0) throw ConfigError("lr must be > 0");
    if (c.tau < 0.0 || c.tau >= 1.0) throw ConfigError("tau must lie in [0,1)");
    if (c.sigma < 0.0) throw ConfigError("sigma must be >= 0");
    if (c.clip <= 0.0) throw ConfigError("clip must be > 0");
    if (c.eval.n_samples < 1 || c.eval.k < 1 || c.eval.k > c.eval.n_samples)
        throw ConfigError("eval needs 1 <= k <= n_samples");
    if (c.eval_every < 0) throw ConfigError("eval_every must be >= 0");
    if (c.alpha != 0.0 && (c.predictor_depth < 1 || c.d_repr < 1))
        throw ConfigError("similarity term needs predictor_depth >= 1 and d_repr >= 1");
}

} // namespace

TrainConfig train_config_from_json(const std::string& text) {
    ordered_json root;
    try {
        root = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON parse failed: ") + e.what());
    }
    TrainConfig c;
    bool lr_given = false;
    try {
        static const char* known[] = {
            "algo", "clip_eps", "kl_coef", "eps_std", "task", "mode", "hidden_dim",
            "d_repr", "predictor_hidden", "predictor_depth", "group_size", "batch_size",
            "iterations", "lr", "tau", "alpha", "beta", "sigma", "clip",
            "detach_weights", "seed", "eval", "eval_every"};
        for (const auto& [key, _] : root.items()) {
            if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
                    return key == k;
                }) == std::end(known))
                throw ConfigError("unknown config key: " + key);
        }
        if (root.contains("algo")) c.algo.algo = algo_from_string(root["algo"].get<std::string>());
        if (root.contains("clip_eps")) c.algo.clip_eps = root["clip_eps"].get<double>();
        if (root.contains("kl_coef")) c.algo.kl_coef = root["kl_coef"].get<double>();
        if (root.contains("eps_std")) c.algo.eps_std = root["eps_std"].get<double>();
        if (root.contains("task")) {
            const auto& t = root["task"];
            if (t.contains("family")) c.family = family_from_string(t["family"].get<std::string>());
            if (t.contains("size")) c.task_size = t["size"].get<int>();
            if (t.contains("response_count")) c.response_count = t["response_count"].get<int>();
        }
        if (root.contains("mode")) c.mode = mode_from_string(root["mode"].get<std::string>());
        if (root.contains("hidden_dim")) c.hidden_dim = root["hidden_dim"].get<int>();
        if (root.contains("d_repr")) c.d_repr = root["d_repr"].get<int>();
        if (root.contains("predictor_hidden")) c.predictor_hidden = root["predictor_hidden"].get<int>();
        if (root.contains("predictor_depth")) c.predictor_depth = root["predictor_depth"].get<int>();
        if (root.contains("group_size")) c.group_size = root["group_size"].get<int>();
        if (root.contains("batch_size")) c.batch_size = root["batch_size"].get<int>();
        if (root.contains("iterations")) c.iterations = root["iterations"].get<int>();
        if (root.contains("lr")) {
            c.lr = root["lr"].get<double>();
            lr_given = true;
        }
        if (root.contains("tau")) c.tau = root["tau"].get<double>();
        if (root.contains("alpha")) c.alpha = root["alpha"].get<double>();
        if (root.contains("beta")) c.beta = root["beta"].get<double>();
        if (root.contains("sigma")) c.sigma = root["sigma"].get<double>();
        if (root.contains("clip")) c.clip = root["clip"].get<double>();
        if (root.contains("detach_weights")) c.detach_weights = root["detach_weights"].get<bool>();
        if (root.contains("seed")) c.seed = root["seed"].get<std::uint64_t>();
        if (root.contains("eval")) {
            const auto& e = root["eval"];
            if (e.contains("n_samples")) c.eval.n_samples = e["n_samples"].get<int>();
            if (e.contains("k")) c.eval.k = e["k"].get<int>();
        }
        if (root.contains("eval_every")) c.eval_every = root["eval_every"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON malformed: ") + e.what());
    }
    if (!lr_given) c.lr = c.mode == PolicyMode::tabular ? 0.05 : 0.01;
    validate(c);
    return c;
}

std::string train_config_to_json(const TrainConfig& c) {
    ordered_json root;
    root["algo"] = algo_to_string(c.algo.algo);
    root["clip_eps"] = c.algo.clip_eps;
    root["kl_coef"] = c.algo.kl_coef;
    root["eps_std"] = c.algo.eps_std;
    root["task"] = {{"family", family_to_string(c.family)},
                    {"size", c.task_size},
                    {"response_count", c.response_count}};
    root["mode"] = mode_to_string(c.mode);
    root["hidden_dim"] = c.hidden_dim;
    root["d_repr"] = c.d_repr;
    root["predictor_hidden"] = c.predictor_hidden;
    root["predictor_depth"] = c.predictor_depth;
    root["group_size"] = c.group_size;
    root["batch_size"] = c.batch_size;
    root["iterations"] = c.iterations;
    root["lr"] = c.lr;
    root["tau"] = c.tau;
    root["alpha"] = c.alpha;
    root["beta"] = c.beta;
    root["sigma"] = c.sigma;
    root["clip"] = c.clip;
    root["detach_weights"] = c.detach_weights;
    root["seed"] = c.seed;
    root["eval"] = {{"n_samples", c.eval.n_samples}, {"k", c.eval.k}};
    root["eval_every"] = c.eval_every;
    return root.dump(2) + "\n";
}

namespace {

std::uint64_t binom_u64(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 c = 1;
    for (int i = 0; i < k; ++i) {
        c = c * static_cast<unsigned>(n - i);
        c /= static_cast<unsigned>(i + 1); // exact: C(n,i+1) is an integer
    }
    return static_cast<std::uint64_t>(c);
}

void clipped_sgd_inplace(std::vector<double>& values, const std::vector<double>& grads,
                         double lr, double clip) {
    double norm_sq = 0.0;
    for (double g : grads) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    if (!std::isfinite(norm)) throw NumericError("non-finite predictor gradient");
    const double scale = norm > clip ? clip / norm : 1.0;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * scale * grads[i];
}

} // namespace

double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n) throw DomainError("pass@k needs 0 <= c <= n, n >= 1");
    if (k < 1 || k > n) throw DomainError("pass@k needs 1 <= k <= n");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0; // every k-subset hits a correct sample
    if (n <= 60) {
        const std::uint64_t total = binom_u64(n, k);
        const std::uint64_t miss = binom_u64(n - c, k);
        return static_cast<double>(total - miss) / static_cast<double>(total);
    }
    double miss_ratio = 1.0; // C(n-c,k)/C(n,k) as a product of factors <= 1
    for (int i = 0; i < k; ++i)
        miss_ratio *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - miss_ratio;
}

EvalResult evaluate(const PolicyParams& params, const TaskSet& tasks, int n, int k,
                    std::uint64_t seed) {
    if (tasks.instances.empty()) throw ConfigError("evaluate needs a nonempty task set");
    if (n < k || k < 1) throw DomainError("evaluate needs n >= k >= 1");
    EvalResult res;
    for (std::size_t i = 0; i < tasks.instances.size(); ++i) {
        const TaskInstance& task = tasks.instances[i];
        const PolicyOutput out = forward(params, task);
        double exact = 0.0;
        for (int y : task.correct_set) exact += out.probs[static_cast<std::size_t>(y)];
        res.mean_reward += exact;
        RngStream rng(seed, StreamPurpose::eval, 0, static_cast<std::uint64_t>(i));
        const auto samples = sample_group(params, task, n, rng);
        int c = 0;
        for (int y : samples) c += verify(task, y);
        res.pass_at_k += pass_at_k(n, c, k);
    }
    const double inv = 1.0 / static_cast<double>(tasks.instances.size());
    res.mean_reward *= inv;
    res.pass_at_k *= inv;
    return res;
}

RunArtifacts train(const TrainConfig& config, const std::string& out_dir) {
    validate(config);
    const TaskSet ts = generate_taskset(config.family, config.task_size, config.seed,
                                        config.response_count);
    return train_on_taskset(config, ts, out_dir);
}

RunArtifacts train_on_taskset(const TrainConfig& config, const TaskSet& tasks,
                              const std::string& out_dir) {
    validate(config);
    if (tasks.instances.empty()) throw ConfigError("training needs a nonempty task set");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    const int k_responses = tasks.instances.front().response_count;
    for (const auto& t : tasks.instances)
        if (t.response_count != k_responses)
            throw ConfigError("training requires a uniform response space across the task set");

    PolicyParams theta;
    if (config.mode == PolicyMode::tabular) {
        theta = make_tabular_policy(static_cast<int>(tasks.instances.size()), k_responses);
    } else {
        const int feat = static_cast<int>(tasks.instances.front().features.size());
        theta = make_network_policy({feat, config.hidden_dim, config.d_repr, k_responses},
                                    config.seed);
    }
    SiameseState siamese = make_siamese(theta, config.tau);
    PredictorParams predictor;
    const bool use_sim = is_popo_family(config.algo.algo) && config.alpha != 0.0 &&
                         config.algo.algo != Algo::sft_positive;
    if (use_sim)
        predictor = make_predictor(theta.repr_dim(), config.predictor_hidden,
                                   config.predictor_depth, config.seed);

    // GRPO's KL anchor: the initial policy's exact distribution per prompt.
    std::vector<std::vector<double>> ref_probs;
    const bool is_grpo = !is_popo_family(config.algo.algo);
    if (is_grpo) {
        ref_probs.reserve(tasks.instances.size());
        for (const auto& t : tasks.instances) ref_probs.push_back(forward(theta, t).probs);
    }

    RunArtifacts art;
    art.config_snapshot = config;
    art.config_path = out_dir + "/config.json";
    art.metrics_path = out_dir + "/metrics.jsonl";
    art.checkpoint_path = out_dir + "/policy.bin";
    art.summary_path = out_dir + "/summary.csv";
    {
        std::ofstream cfg(art.config_path, std::ios::binary);
        if (!cfg) throw IoError("cannot write " + art.config_path);
        cfg << train_config_to_json(config);
    }
    std::ofstream metrics(art.metrics_path, std::ios::binary);
    if (!metrics) throw IoError("cannot write " + art.metrics_path);

    double last_gap = 0.0, last_bound = 0.0;
    for (int iter = 1; iter <= config.iterations; ++iter) {
        try {
            RngStream prompt_rng(config.seed, StreamPurpose::prompt_sample,
                                 static_cast<std::uint64_t>(iter), 0);
            struct Slot {
                const TaskInstance* task;
                PolicyOutput out;
                std::vector<int> sampled;
                Partition part;
            };
            std::vector<Slot> slots;
            slots.reserve(static_cast<std::size_t>(config.batch_size));
            int correct_rollouts = 0, prompts_with_positive = 0;
            double entropy_sum = 0.0;
            for (int b = 0; b < config.batch_size; ++b) {
                Slot s;
                s.task = &tasks.instances[prompt_rng.below(tasks.instances.size())];
                s.out = forward(theta, *s.task);
                RngStream roll_rng(config.seed, StreamPurpose::rollout,
                                   static_cast<std::uint64_t>(iter),
                                   static_cast<std::uint64_t>(b));
                s.sampled = sample_group(theta, *s.task, config.group_size, roll_rng);
                s.part = partition_rollouts(*s.task, s.sampled);
                for (int y : s.sampled) correct_rollouts += verify(*s.task, y);
                if (!s.part.positives.empty()) ++prompts_with_positive;
                entropy_sum += s.out.entropy;
                slots.push_back(std::move(s));
            }

            double nll = 0.0, sim = 0.0, ent = 0.0, total = 0.0, grad_norm = 0.0;
            if (is_grpo) {
                GradBuffer grads = make_grad_buffer(theta);
                const double scale = 1.0 / static_cast<double>(config.batch_size);
                for (const Slot& s : slots) {
                    std::vector<int> rewards;
                    rewards.reserve(s.sampled.size());
                    for (int y : s.sampled) rewards.push_back(verify(*s.task, y));
                    const GroupAdvantage adv =
                        group_advantages(rewards, config.algo.algo, config.algo.eps_std);
                    const auto& ref = ref_probs[static_cast<std::size_t>(s.task->prompt_id)];
                    // Single inner iteration: old = current at sampling time.
                    total += scale * grpo_loss(s.out.probs, s.out.probs, s.sampled, adv, ref,
                                               config.algo.clip_eps, config.algo.kl_coef);
                    auto g = grpo_grad_logits(s.out, s.out.probs, s.sampled, adv, ref,
                                              config.algo.clip_eps, config.algo.kl_coef);
                    for (auto& v : g) v *= scale;
                    backward(theta, s.out, g, {}, grads);
                }
                double clipped = 0.0;
                theta = sgd_step(theta, grads, config.lr, config.clip, &clipped);
                siamese.grad_norm_max = std::max(siamese.grad_norm_max, clipped);
                grad_norm = clipped;
            } else if (prompts_with_positive > 0) {
                GradBuffer grads = make_grad_buffer(theta);
                std::vector<double> pred_grads(predictor.values.size(), 0.0);
                const double scale = 1.0 / static_cast<double>(prompts_with_positive);
                for (std::size_t b = 0; b < slots.size(); ++b) {
                    const Slot& s = slots[b];
                    if (s.part.positives.empty()) continue; // no verified positive: skip this prompt
                    SimInputs si;
                    SimLossResult sim_detail;
                    const SimInputs* sip = nullptr;
                    RngStream noise_rng(config.seed, StreamPurpose::sim_noise,
                                        static_cast<std::uint64_t>(iter),
                                        static_cast<std::uint64_t>(b));
                    if (use_sim) {
                        si.repr_target = forward(siamese.xi, *s.task).representation;
                        si.predictor = &predictor;
                        si.sigma = config.sigma;
                        sip = &si;
                    }
                    const LossBreakdown lb =
                        ablation_loss(config.algo, s.out, s.part, sip, config.alpha,
                                      config.beta, &noise_rng, &sim_detail);
                    nll += scale * lb.nll;
                    sim += scale * lb.sim;
                    ent += scale * lb.ent;
                    total += scale * lb.total;
                    auto g = ablation_grad_logits(config.algo, s.out, s.part, config.alpha,
                                                  config.beta,
                                                  sip ? &sim_detail.cos_per_positive : nullptr,
                                                  config.detach_weights);
                    for (auto& v : g) v *= scale;
                    std::vector<double> grad_repr;
                    if (sip) {
                        grad_repr.resize(sim_detail.grad_repr_online.size());
                        for (std::size_t j = 0; j < grad_repr.size(); ++j)
                            grad_repr[j] = scale * config.alpha * sim_detail.grad_repr_online[j];
                        for (std::size_t j = 0; j < pred_grads.size(); ++j)
                            pred_grads[j] += scale * config.alpha * sim_detail.grad_predictor[j];
                    }
                    backward(theta, s.out, g, grad_repr, grads);
                }
                double clipped = 0.0;
                theta = sgd_step(theta, grads, config.lr, config.clip, &clipped);
                siamese.grad_norm_max = std::max(siamese.grad_norm_max, clipped);
                grad_norm = clipped;
                if (use_sim)
                    clipped_sgd_inplace(predictor.values, pred_grads, config.lr, config.clip);
            }
            // The EMA update lives outside the non-empty guard:
            // skipped iterations still move xi toward theta.
            ema_update(siamese, theta);
            last_gap = siamese.gap_trace.back();
            last_bound = bound_rhs(siamese, config.lr);

            ordered_json rec;
            rec["iter"] = iter;
            rec["mean_reward"] = static_cast<double>(correct_rollouts) /
                                 static_cast<double>(config.batch_size * config.group_size);
            rec["frac_prompts_with_positive"] =
                static_cast<double>(prompts_with_positive) /
                static_cast<double>(config.batch_size);
            rec["entropy_mean"] = entropy_sum / static_cast<double>(config.batch_size);
            rec["nll"] = nll;
            rec["sim"] = sim;
            rec["ent"] = ent;
            rec["total"] = total;
            rec["gap"] = last_gap;
            rec["gap_bound"] = last_bound;
            rec["grad_norm"] = grad_norm;
            const bool eval_iter =
                iter == config.iterations ||
                (config.eval_every > 0 && iter % config.eval_every == 0);
            if (eval_iter) {
                const EvalResult er = evaluate(theta, tasks, config.eval.n_samples,
                                               config.eval.k, config.seed);
                rec["pass_at_k"] = er.pass_at_k;
            }
            metrics << rec.dump() << "\n" << std::flush;
        } catch (const NumericError& e) {
            metrics.flush();
            throw NumericError("iteration " + std::to_string(iter) + ": " + e.what());
        }
    }
    metrics.flush();

    const EvalResult final_eval =
        evaluate(theta, tasks, config.eval.n_samples, config.eval.k, config.seed);
    art.final_mean_reward = final_eval.mean_reward;
    art.final_pass_at_k = final_eval.pass_at_k;
    save_policy(theta, art.checkpoint_path);
    {
        std::ofstream summary(art.summary_path, std::ios::binary);
        if (!summary) throw IoError("cannot write " + art.summary_path);
        summary << "algo,iterations,final_mean_reward,final_pass_at_k,final_gap,final_gap_bound\n";
        ordered_json row; // reuse the JSON float printer so CSV == JSONL formatting
        row["r"] = art.final_mean_reward;
        row["p"] = art.final_pass_at_k;
        row["g"] = last_gap;
        row["b"] = last_bound;
        summary << algo_to_string(config.algo.algo) << "," << config.iterations << ","
                << row["r"].dump() << "," << row["p"].dump() << "," << row["g"].dump()
                << "," << row["b"].dump() << "\n";
    }
    return art;
}

std::vector<AblationRow> run_ablation_grid(const TrainConfig& base,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::string& out_dir) {
    if (seeds.size() < 3) throw ConfigError("ablation grid needs >= 3 seeds");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

    struct Variant {
        std::string name;
        Algo algo;
        double tau;
        double alpha;
    };
    const std::vector<Variant> variants = {
        {"popo", Algo::popo, base.tau, base.alpha},
        {"popo_uniform", Algo::popo_uniform, base.tau, base.alpha},
        {"popo_with_neg_weighted", Algo::popo_with_neg_weighted, base.tau, base.alpha},
        {"popo_with_neg_uniform", Algo::popo_with_neg_uniform, base.tau, base.alpha},
        {"popo_no_momentum", Algo::popo, 0.0, base.alpha},
        {"popo_no_alignment", Algo::popo, base.tau, 0.0},
        {"grpo", Algo::grpo, base.tau, base.alpha},
    };

    std::ofstream runs(out_dir + "/ablation_runs.csv", std::ios::binary);
    if (!runs) throw IoError("cannot write " + out_dir + "/ablation_runs.csv");
    runs << "variant,seed,final_mean_reward,final_pass_at_k\n";

    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        AblationRow row;
        row.variant = v.name;
        row.seeds = static_cast<int>(seeds.size());
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.algo.algo = v.algo;
            cfg.tau = v.tau;
            cfg.alpha = v.alpha;
            cfg.seed = seed;
            const RunArtifacts art =
                train(cfg, out_dir + "/" + v.name + "/seed_" + std::to_string(seed));
            runs << v.name << "," << seed << "," << art.final_mean_reward << ","
                 << art.final_pass_at_k << "\n";
            row.mean_reward += art.final_mean_reward;
            row.pass_at_k += art.final_pass_at_k;
        }
        row.mean_reward /= static_cast<double>(seeds.size());
        row.pass_at_k /= static_cast<double>(seeds.size());
        rows.push_back(row);
    }

    std::ofstream csv(out_dir + "/ablation.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write " + out_dir + "/ablation.csv");
    csv << "variant,seeds,final_mean_reward,final_pass_at_k\n";
    for (const AblationRow& r : rows)
        csv << r.variant << "," << r.seeds << "," << r.mean_reward << "," << r.pass_at_k
            << "\n";
    return rows;
}

} // namespace popo
