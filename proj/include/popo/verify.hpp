#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "popo/taskenv.hpp"

namespace popo {

struct FDOracleConfig {
    double h = 1e-6;
    double tolerance_abs = 1e-7;
    double tolerance_rel = 1e-7;
};

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate. The
/// caller must freeze any stochastic element of f first; the oracle only
/// ever differentiates deterministic closures.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& at,
                                const FDOracleConfig& cfg);

struct CheckResult {
    std::string name;
    bool passed = false;
    double worst_case = 0.0;
    int instances_run = 0;
    std::string details;
};

/// Test-only corruptions proving each check can fail. They perturb the
/// comparison inside the suite, never the production code paths.
enum class Fault { none, flip_closed_form_sign, drop_nll_tax, detach_weights };

/// Runs every theorem/lemma/identity check over n_instances random
/// instances. Failures are reported in the results, not thrown. Results are
/// ordered by check name.
std::vector<CheckResult> run_check_suite(std::uint64_t seed, int n_instances,
                                         Fault fault = Fault::none);

bool all_checks_passed(const std::vector<CheckResult>& results);

std::string check_report_json(const std::vector<CheckResult>& results);

struct OneStepResult {
    std::vector<double> delta_z;
    double delta_pos_mass = 0.0;
};

/// One exact gradient-descent step on the logits of a single instance:
/// returns the logit deltas and the change in total positive mass.
OneStepResult brute_force_one_step(const TaskInstance& task,
                                   const std::vector<double>& logits,
                                   const Partition& partition, double lr,
                                   double beta);

} // namespace popo
