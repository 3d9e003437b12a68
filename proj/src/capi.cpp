#include "popo.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "popo/errors.hpp"
#include "popo/harness.hpp"
#include "popo/taskenv.hpp"
#include "popo/verify.hpp"

struct popo_taskset {
    popo::TaskSet ts;
};

namespace {

thread_local std::string g_last_error = "no error";

int fail(int code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

/// Runs fn, translating the library's exception hierarchy into ABI codes.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return POPO_OK;
    } catch (const popo::ConfigError& e) {
        return fail(POPO_ERR_CONFIG, e.what());
    } catch (const popo::NumericError& e) {
        return fail(POPO_ERR_NUMERIC, e.what());
    } catch (const popo::IoError& e) {
        return fail(POPO_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(POPO_ERR_INVALID, e.what());
    } catch (...) {
        return fail(POPO_ERR_INVALID, "unknown error");
    }
}

std::string read_file(const char* path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw popo::IoError(std::string("cannot open for reading: ") + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<std::uint64_t> parse_seeds(const char* csv) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(item, &pos);
        } catch (const std::exception&) {
            throw popo::ConfigError("bad seed value: " + item);
        }
        if (pos != item.size()) throw popo::ConfigError("bad seed value: " + item);
        seeds.push_back(v);
    }
    if (seeds.empty()) throw popo::ConfigError("no seeds given");
    return seeds;
}

} // namespace

extern "C" {

uint32_t popo_abi_version(void) { return 1; }

const char* popo_last_error(void) { return g_last_error.c_str(); }

int popo_train_json(const char* config_json, const char* out_dir) {
    if (!config_json || !out_dir) return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] {
        const popo::TrainConfig cfg = popo::train_config_from_json(config_json);
        popo::train(cfg, out_dir);
    });
}

int popo_train_file(const char* config_path, const char* out_dir) {
    if (!config_path || !out_dir) return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] {
        const popo::TrainConfig cfg = popo::train_config_from_json(read_file(config_path));
        popo::train(cfg, out_dir);
    });
}

int popo_verify(uint64_t seed, int n_instances, int* all_passed, char** report_json) {
    if (!all_passed) return fail(POPO_ERR_INVALID, "null all_passed");
    return guarded([&] {
        const auto results = popo::run_check_suite(seed, n_instances);
        *all_passed = popo::all_checks_passed(results) ? 1 : 0;
        if (report_json) *report_json = dup_string(popo::check_report_json(results));
    });
}

int popo_ablate_json(const char* config_json, const char* seeds_csv, const char* out_dir) {
    if (!config_json || !seeds_csv || !out_dir)
        return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] {
        const popo::TrainConfig cfg = popo::train_config_from_json(config_json);
        popo::run_ablation_grid(cfg, parse_seeds(seeds_csv), out_dir);
    });
}

int popo_ablate_file(const char* config_path, const char* seeds_csv, const char* out_dir) {
    if (!config_path || !seeds_csv || !out_dir)
        return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] {
        const popo::TrainConfig cfg = popo::train_config_from_json(read_file(config_path));
        popo::run_ablation_grid(cfg, parse_seeds(seeds_csv), out_dir);
    });
}

int popo_pass_at_k(int n, int c, int k, double* out) {
    if (!out) return fail(POPO_ERR_INVALID, "null out");
    return guarded([&] { *out = popo::pass_at_k(n, c, k); });
}

int popo_taskset_generate(const char* family, int size, uint64_t seed,
                          int response_count, popo_taskset** out) {
    if (!family || !out) return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] {
        auto handle = std::make_unique<popo_taskset>();
        handle->ts = popo::generate_taskset(popo::family_from_string(family), size, seed,
                                            response_count);
        *out = handle.release();
    });
}

int popo_taskset_load(const char* path, popo_taskset** out) {
    if (!path || !out) return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] {
        auto handle = std::make_unique<popo_taskset>();
        handle->ts = popo::load_taskset(path);
        *out = handle.release();
    });
}

int popo_taskset_save(const popo_taskset* ts, const char* path) {
    if (!ts || !path) return fail(POPO_ERR_INVALID, "null argument");
    return guarded([&] { popo::save_taskset(ts->ts, path); });
}

int popo_taskset_size(const popo_taskset* ts, int* out) {
    if (!ts || !out) return fail(POPO_ERR_INVALID, "null argument");
    *out = static_cast<int>(ts->ts.instances.size());
    return POPO_OK;
}

void popo_taskset_free(popo_taskset* ts) { delete ts; }

void popo_string_free(char* s) { std::free(s); }

} // extern "C"
