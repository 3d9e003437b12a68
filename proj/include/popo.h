#ifndef POPO_H
#define POPO_H

/* C interface to the POPO laboratory: training runs, the theorem-check
 * suite, ablation grids, pass@k, and task-set handling, over a stable ABI
 * of error codes and opaque handles. Every function returns a POPO_* code;
 * popo_last_error() describes the most recent failure on this thread. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define POPO_OK 0
#define POPO_ERR_NUMERIC 1
#define POPO_ERR_CONFIG 2
#define POPO_ERR_INVALID 3
#define POPO_ERR_IO 4

uint32_t popo_abi_version(void);

/* Message for the last failing call on the calling thread; never NULL. */
const char* popo_last_error(void);

/* Training. Config is JSON mirroring the TrainConfig fields; artifacts
 * (config.json, metrics.jsonl, policy.bin, summary.csv) land in out_dir. */
int popo_train_json(const char* config_json, const char* out_dir);
int popo_train_file(const char* config_path, const char* out_dir);

/* Theorem-check suite. all_passed receives 1 iff every check passed;
 * report_json (optional, free with popo_string_free) receives the full
 * report. A failing check is a successful call: the outcome is data. */
int popo_verify(uint64_t seed, int n_instances, int* all_passed, char** report_json);

/* Ablation grid over comma-separated seeds (at least 3). */
int popo_ablate_json(const char* config_json, const char* seeds_csv, const char* out_dir);
int popo_ablate_file(const char* config_path, const char* seeds_csv, const char* out_dir);

/* Unbiased pass@k estimator: 1 - C(n-c,k)/C(n,k). */
int popo_pass_at_k(int n, int c, int k, double* out);

/* Task sets. */
typedef struct popo_taskset popo_taskset;
int popo_taskset_generate(const char* family, int size, uint64_t seed,
                          int response_count, popo_taskset** out);
int popo_taskset_load(const char* path, popo_taskset** out);
int popo_taskset_save(const popo_taskset* ts, const char* path);
int popo_taskset_size(const popo_taskset* ts, int* out);
void popo_taskset_free(popo_taskset* ts);

void popo_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* POPO_H */
