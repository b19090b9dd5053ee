/*
 * Copyright 2026 The safeopt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SAFEOPT_SAFEOPT_H_
#define SAFEOPT_SAFEOPT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(SAFEOPT_BUILDING_LIBRARY)
#define SO_API __attribute__((visibility("default")))
#else
#define SO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every function that can fail returns one; on failure the
 * message is available from so_last_error() on the same thread. */
typedef enum so_status {
  SO_OK = 0,
  SO_INVALID_ARGUMENT = 1,
  SO_DIMENSION_MISMATCH = 2,
  SO_NOT_POSITIVE_DEFINITE = 3,
  SO_RANK_DEFICIENT = 4,
  SO_NON_FINITE_INPUT = 5,
  SO_NON_FINITE_LOSS = 6,
  SO_UNRECORDED_LEAF = 7,
  SO_EMPTY_BATCH = 8,
  SO_CONFIG_INVALID = 9,
  SO_IO_FAILURE = 10,
  SO_SCHEMA_MISMATCH = 11,
  SO_INTERNAL = 100
} so_status;

typedef struct so_config so_config;

SO_API const char* so_version(void);
/* Message of the last failure on this thread; "" after a success. */
SO_API const char* so_last_error(void);
/* "Ok", "ConfigInvalid", ...; "Unknown" for values outside the enum. */
SO_API const char* so_status_name(so_status status);

/* experiment: "qcqp", "meta-train" or "nav-train". */
SO_API so_status so_config_new(const char* experiment, so_config** out);
/* Parses a JSON config file. Keys it leaves out keep their defaults. */
SO_API so_status so_config_load(const char* experiment, const char* path, so_config** out);
SO_API so_status so_config_parse(const char* experiment, const char* json_text, so_config** out);
SO_API void so_config_free(so_config* cfg);

/* Sets one key given as a dotted path ("unroll.beta") to a JSON value
 * ("0.01", "[1, 2]", "\"adam\""). The whole config is revalidated; on
 * failure it is left unchanged. */
SO_API so_status so_config_set(so_config* cfg, const char* key, const char* json_value);
SO_API so_status so_config_set_seeds(so_config* cfg, const uint64_t* seeds, size_t count);
SO_API so_status so_config_set_output_dir(so_config* cfg, const char* dir);
/* Iteration budget of the experiment: qcqp.steps, meta_train.outer_steps
 * or nav_train.iterations. */
SO_API so_status so_config_set_steps(so_config* cfg, uint64_t steps);

/* Canonical JSON and its 16-hex-digit hash. Strings returned through
 * char** are owned by the caller and released with so_string_free. */
SO_API so_status so_config_dump(const so_config* cfg, char** json_out);
SO_API so_status so_config_hash(const so_config* cfg, char** hash_out);
SO_API void so_string_free(char* s);

/* Runs every seed and writes outputs; *output_dir receives the resolved
 * directory (may be NULL). */
SO_API so_status so_run(const so_config* cfg, char** output_dir);

/* Across-seed mean and 95% interval of CSV files with one header. */
SO_API so_status so_aggregate(const char* const* files, size_t count, const char* out_path);

/* Projection of x0 onto {x : A x <= b} in the constraint-aware metric.
 * a is m x n row-major with m <= n; x_out has n entries. lambda_out (m
 * entries) may be NULL. */
SO_API so_status so_project(const double* a, size_t m, size_t n, const double* b, const double* x0,
                            double delta, double* x_out, double* lambda_out);

#ifdef __cplusplus
}
#endif

#endif /* SAFEOPT_SAFEOPT_H_ */
