#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "popo/baselines.hpp"
#include "popo/policy.hpp"
#include "popo/taskenv.hpp"

namespace popo {

struct EvalSettings {
    int n_samples = 128;
    int k = 8;
};

/// Everything a run needs. Defaults mirror the published configuration
/// where the value is meaningful at toy scale (tau, alpha, beta, sigma,
/// clip, group size, predictor depth, eval n/k); lr is toy-scale and mode
/// dependent (0.05 tabular, 0.01 network) when the config does not set it.
struct TrainConfig {
    BaselineConfig algo;
    Family family = Family::multi_answer_divisibility;
    int task_size = 16;
    int response_count = 0; // 0 = family default
    PolicyMode mode = PolicyMode::tabular;
    int hidden_dim = 32;
    int d_repr = 32;
    int predictor_hidden = 32;
    int predictor_depth = 2;
    int group_size = 8;
    int batch_size = 4;
    int iterations = 400;
    double lr = 0.05;
    double tau = 0.999;
    double alpha = 0.1;
    double beta = 0.01;
    double sigma = 0.02;
    double clip = 1.0;
    bool detach_weights = false;
    std::uint64_t seed = 0;
    EvalSettings eval;
    int eval_every = 0; // 0 = evaluate at the final iteration only
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

struct RunArtifacts {
    TrainConfig config_snapshot;
    std::string config_path;
    std::string metrics_path;
    std::string checkpoint_path;
    std::string summary_path;
    double final_mean_reward = 0.0; // exact, over the enumerated space
    double final_pass_at_k = 0.0;
};

/// Executes the training loop: initialize xi <- theta0; per iteration
/// sample, verify, partition; skip the policy update when no prompt has a
/// positive (popo family) but ALWAYS apply the EMA update; append one
/// metrics record per iteration. Deterministic for a fixed config.
RunArtifacts train(const TrainConfig& config, const std::string& out_dir);

/// Same loop on a caller-provided TaskSet (the plain train() generates one
/// from the config).
RunArtifacts train_on_taskset(const TrainConfig& config, const TaskSet& tasks,
                              const std::string& out_dir);

/// Unbiased estimator 1 - C(n-c,k)/C(n,k); exact integer binomials for
/// small n, stable product form beyond.
double pass_at_k(int n, int c, int k);

struct EvalResult {
    double mean_reward = 0.0; // exact: mean over tasks of sum_{y correct} pi(y)
    double pass_at_k = 0.0;   // sampled: mean over tasks of the unbiased estimator
};

EvalResult evaluate(const PolicyParams& params, const TaskSet& tasks, int n, int k,
                    std::uint64_t seed);

struct AblationRow {
    std::string variant;
    int seeds = 0;
    double mean_reward = 0.0;
    double pass_at_k = 0.0;
};

/// Trains popo, popo_uniform, popo_with_neg_weighted, popo_with_neg_uniform,
/// popo_no_momentum (tau=0), popo_no_alignment (alpha=0), and grpo on
/// identical TaskSets per seed; writes per-run artifacts under out_dir and a
/// seed-averaged ablation.csv. Needs >= 3 seeds.
std::vector<AblationRow> run_ablation_grid(const TrainConfig& base,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::string& out_dir);

} // namespace popo
