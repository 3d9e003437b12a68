#include <charconv>
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "popo.h"

namespace {

/// Maps a library status code onto the CLI exit convention:
/// 0 success, 1 numeric failure, 2 config (or any other) error.
int to_exit_code(int rc) {
    if (rc == POPO_OK) return 0;
    std::cerr << "error: " << popo_last_error() << "\n";
    return rc == POPO_ERR_NUMERIC ? 1 : 2;
}

void print_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::cout << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Positive-only policy optimization laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string seeds_csv;
    std::uint64_t seed = 0;
    int instances = 1000;
    int n = 0, c = 0, k = 0;

    auto* train = app.add_subcommand("train", "Run one training job from a JSON config");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--out", out_dir, "Output directory for metrics and checkpoint")
        ->required();

    auto* verify = app.add_subcommand("verify", "Run the gradient/bound check suite");
    verify->add_option("--seed", seed, "Base seed for generated instances");
    verify->add_option("--instances", instances, "Random instances per check");

    auto* ablate = app.add_subcommand("ablate", "Train the ablation grid across seeds");
    ablate->add_option("--config", config_path, "JSON config file for the base run")
        ->required();
    ablate->add_option("--seeds", seeds_csv, "Comma-separated seed list, e.g. 1,2,3")
        ->required();
    ablate->add_option("--out", out_dir, "Output directory for the grid")->required();

    auto* passk = app.add_subcommand("passk", "Evaluate the unbiased pass@k estimator");
    passk->add_option("--n", n, "Samples drawn")->required();
    passk->add_option("--c", c, "Correct samples among n")->required();
    passk->add_option("--k", k, "Subset size")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (train->parsed()) {
        return to_exit_code(popo_train_file(config_path.c_str(), out_dir.c_str()));
    }

    if (verify->parsed()) {
        int all_passed = 0;
        char* report = nullptr;
        const int rc = popo_verify(seed, instances, &all_passed, &report);
        if (rc != POPO_OK) return to_exit_code(rc);
        std::cout << report << "\n";
        popo_string_free(report);
        return all_passed ? 0 : 1;
    }

    if (ablate->parsed()) {
        return to_exit_code(
            popo_ablate_file(config_path.c_str(), seeds_csv.c_str(), out_dir.c_str()));
    }

    if (passk->parsed()) {
        double value = 0.0;
        const int rc = popo_pass_at_k(n, c, k, &value);
        if (rc != POPO_OK) return to_exit_code(rc);
        print_double(value);
        return 0;
    }

    return 2;
}
