/* Copyright 2026 the mtvl authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C API for the mtvl multi-task vision-language toy stack. All entry points
 * return a status code; on failure mtvl_last_error() describes what went
 * wrong (thread-local). Strings returned through out-parameters are owned by
 * the caller and must be released with mtvl_string_free().
 */
#ifndef MTVL_H
#define MTVL_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtvl_status {
  MTVL_OK = 0,
  MTVL_ERR_INVALID_ARG = 1, /* contract violation: bad shapes/args/config */
  MTVL_ERR_IO = 2,          /* file not found, short read, bad magic */
  MTVL_ERR_NUMERIC = 3,     /* NaN/Inf or other numeric fault */
  MTVL_ERR_INTERNAL = 4
} mtvl_status;

/* Opaque run configuration (hierarchical key-value, JSON on disk). */
typedef struct mtvl_config mtvl_config;

const char* mtvl_version(void);
const char* mtvl_last_error(void);
void mtvl_string_free(char* s);

/* Config lifecycle. mtvl_config_create yields built-in defaults;
 * mtvl_config_load parses a JSON file and rejects unknown keys.
 * mtvl_config_set overrides a dotted key ("optimizer.lr") from a string. */
mtvl_status mtvl_config_create(mtvl_config** out);
mtvl_status mtvl_config_load(const char* path, mtvl_config** out);
mtvl_status mtvl_config_set(mtvl_config* cfg, const char* dotted_key, const char* value);
mtvl_status mtvl_config_dump(const mtvl_config* cfg, char** out_json);
void mtvl_config_free(mtvl_config* cfg);

/* Deterministic synthetic shapes dataset (train + eval files under out_dir). */
mtvl_status mtvl_gen_data(const mtvl_config* cfg, const char* out_dir);

/* Multi-task training; writes checkpoints and a JSON-lines metrics log under
 * out_dir. Subsequent evaluation runs from the final checkpoint. */
mtvl_status mtvl_train(const mtvl_config* cfg, const char* out_dir);

/* Evaluate one checkpoint on every task; returns the report as JSON. */
mtvl_status mtvl_evaluate(const char* checkpoint_path, const char* data_path, char** out_json);

/* Finite-difference gradient verification (float64); returns report JSON. */
mtvl_status mtvl_grad_check(const mtvl_config* cfg, char** out_json);

/* Monte-Carlo sampler / optimizer statistics; returns report JSON. */
mtvl_status mtvl_sampler_sim(const mtvl_config* cfg, char** out_json);

/* Toy ablation grids: which = "repr" or "sampling". Returns report JSON. */
mtvl_status mtvl_ablate(const mtvl_config* cfg, const char* which, const char* out_dir,
                        char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* MTVL_H */
