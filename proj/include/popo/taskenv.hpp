#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace popo {

enum class Family {
    single_answer_modular,
    multi_answer_divisibility,
};

Family family_from_string(const std::string& name);
std::string family_to_string(Family family);

/// One prompt with an enumerated response space {0..K-1} and the set of
/// response indices the verifier accepts. correct_set may be empty
/// (unsolvable prompt) or the full space; it is kept sorted ascending.
struct TaskInstance {
    int prompt_id = 0;
    std::vector<double> features;
    int response_count = 0;
    std::vector<int> correct_set;

    bool is_correct(int response) const;
};

struct TaskSet {
    Family family = Family::single_answer_modular;
    std::uint64_t seed = 0;
    std::vector<TaskInstance> instances;
};

/// Disjoint split of the sampled responses of one group. Duplicates are
/// collapsed: the loss sums over the positive *set*, not the rollout
/// multiset. duplicate_count records how many sampled entries were dropped
/// by the collapse, for diagnostics only.
struct Partition {
    std::vector<int> positives;
    std::vector<int> negatives;
    int duplicate_count = 0;
};

/// Deterministically generates `size` instances of the given family.
/// single_answer_modular: K = response_count, exactly one correct index,
/// (a + b) mod K for random a, b. multi_answer_divisibility: correct set =
/// multiples of a divisor d in {2..K-1}, so every instance has at least two
/// correct responses.
TaskSet generate_taskset(Family family, int size, std::uint64_t seed,
                         int response_count = 0);

/// Binary deterministic reward: 1 iff response is in the instance's correct
/// set. Out-of-range responses are a domain error, not a zero reward.
int verify(const TaskInstance& task, int response);

Partition partition_rollouts(const TaskInstance& task,
                             const std::vector<int>& sampled);

/// Canonical JSON serialization: {family, seed, instances:[...]} with
/// correct_set sorted ascending. Byte-stable for a given TaskSet.
std::string taskset_to_json(const TaskSet& ts);
TaskSet taskset_from_json(const std::string& text);

void save_taskset(const TaskSet& ts, const std::string& path);
TaskSet load_taskset(const std::string& path);

/// Default K per family when the caller passes 0.
int default_response_count(Family family);

} // namespace popo
