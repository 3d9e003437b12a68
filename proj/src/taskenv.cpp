#include "popo/taskenv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "popo/errors.hpp"
#include "popo/rng.hpp"

namespace popo {

namespace {

using ordered_json = nlohmann::ordered_json;

// Prompt encodings are one-hot so a small dense network can realize the
// verifier exactly: modular addition needs both operands, divisibility only
// the divisor.
std::vector<double> one_hot_pair(int a, int b, int k) {
    std::vector<double> f(static_cast<std::size_t>(2 * k), 0.0);
    f[static_cast<std::size_t>(a)] = 1.0;
    f[static_cast<std::size_t>(k + b)] = 1.0;
    return f;
}

std::vector<double> one_hot(int v, int k) {
    std::vector<double> f(static_cast<std::size_t>(k), 0.0);
    f[static_cast<std::size_t>(v)] = 1.0;
    return f;
}

} // namespace

Family family_from_string(const std::string& name) {
    if (name == "single_answer_modular") return Family::single_answer_modular;
    if (name == "multi_answer_divisibility") return Family::multi_answer_divisibility;
    throw ConfigError("unsupported task family: " + name);
}

std::string family_to_string(Family family) {
    switch (family) {
        case Family::single_answer_modular: return "single_answer_modular";
        case Family::multi_answer_divisibility: return "multi_answer_divisibility";
    }
    throw ConfigError("unsupported task family enum value");
}

int default_response_count(Family family) {
    switch (family) {
        case Family::single_answer_modular: return 5;
        case Family::multi_answer_divisibility: return 12;
    }
    throw ConfigError("unsupported task family enum value");
}

bool TaskInstance::is_correct(int response) const {
    return std::binary_search(correct_set.begin(), correct_set.end(), response);
}

TaskSet generate_taskset(Family family, int size, std::uint64_t seed,
                         int response_count) {
    if (size < 1) throw ConfigError("taskset size must be >= 1");
    const int k = response_count > 0 ? response_count : default_response_count(family);
    if (k < 2) throw ConfigError("response_count must be >= 2");
    if (family == Family::multi_answer_divisibility && k < 4)
        throw ConfigError("multi_answer_divisibility needs response_count >= 4");

    TaskSet ts;
    ts.family = family;
    ts.seed = seed;
    ts.instances.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
        RngStream rng(seed, StreamPurpose::task_gen, 0, static_cast<std::uint64_t>(i));
        TaskInstance inst;
        inst.prompt_id = i;
        inst.response_count = k;
        if (family == Family::single_answer_modular) {
            const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
            const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
            inst.features = one_hot_pair(a, b, k);
            inst.correct_set = {(a + b) % k};
        } else {
            // d <= k-1 guarantees both 0 and d are in range, so |S+| >= 2 on
            // every instance and the positive-weight normalization is never
            // trivial.
            const int d = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 2)));
            inst.features = one_hot(d, k);
            for (int y = 0; y < k; y += d) inst.correct_set.push_back(y);
        }
        ts.instances.push_back(std::move(inst));
    }
    return ts;
}

int verify(const TaskInstance& task, int response) {
    if (response < 0 || response >= task.response_count)
        throw DomainError("response index out of range: " + std::to_string(response) +
                          " for K=" + std::to_string(task.response_count));
    return task.is_correct(response) ? 1 : 0;
}

Partition partition_rollouts(const TaskInstance& task,
                             const std::vector<int>& sampled) {
    std::vector<int> unique = sampled;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

    Partition p;
    p.duplicate_count = static_cast<int>(sampled.size() - unique.size());
    for (int y : unique) {
        if (verify(task, y))
            p.positives.push_back(y);
        else
            p.negatives.push_back(y);
    }
    return p;
}

std::string taskset_to_json(const TaskSet& ts) {
    ordered_json root;
    root["family"] = family_to_string(ts.family);
    root["seed"] = ts.seed;
    root["instances"] = ordered_json::array();
    for (const TaskInstance& inst : ts.instances) {
        ordered_json j;
        j["prompt_id"] = inst.prompt_id;
        j["features"] = inst.features;
        j["response_count"] = inst.response_count;
        j["correct_set"] = inst.correct_set;
        root["instances"].push_back(std::move(j));
    }
    return root.dump(2) + "\n";
}

TaskSet taskset_from_json(const std::string& text) {
    ordered_json root;
    try {
        root = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("taskset JSON parse failed: ") + e.what());
    }
    try {
        TaskSet ts;
        ts.family = family_from_string(root.at("family").get<std::string>());
        ts.seed = root.at("seed").get<std::uint64_t>();
        for (const auto& j : root.at("instances")) {
            TaskInstance inst;
            inst.prompt_id = j.at("prompt_id").get<int>();
            inst.features = j.at("features").get<std::vector<double>>();
            inst.response_count = j.at("response_count").get<int>();
            inst.correct_set = j.at("correct_set").get<std::vector<int>>();
            if (inst.response_count < 2)
                throw ConfigError("instance response_count must be >= 2");
            if (!std::is_sorted(inst.correct_set.begin(), inst.correct_set.end()))
                throw ConfigError("correct_set must be sorted ascending");
            for (int y : inst.correct_set)
                if (y < 0 || y >= inst.response_count)
                    throw ConfigError("correct_set entry out of range");
            ts.instances.push_back(std::move(inst));
        }
        return ts;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("taskset JSON malformed: ") + e.what());
    }
}

void save_taskset(const TaskSet& ts, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << taskset_to_json(ts);
    if (!out) throw IoError("write failed: " + path);
}

TaskSet load_taskset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return taskset_from_json(buf.str());
}

} // namespace popo
