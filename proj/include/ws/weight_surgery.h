// Copyright 2026 The Weight Surgery Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// C interface to the weight surgery library. Every handle is opaque and owned
// by the caller once returned; release it with the matching *_free function.
// Functions report failure through ws_status and leave a thread-local message
// readable with ws_last_error(). Strings handed out by the library must be
// released with ws_string_free().

#ifndef WS_WEIGHT_SURGERY_H_
#define WS_WEIGHT_SURGERY_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(WS_BUILDING_LIBRARY)
#    define WS_API __declspec(dllexport)
#  else
#    define WS_API __declspec(dllimport)
#  endif
#else
#  define WS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ws_status {
  WS_OK = 0,
  WS_ERR_INVALID_ARGUMENT = 1,
  WS_ERR_ZERO_VECTOR = 2,
  WS_ERR_PARALLEL_DIRECTIONS = 3,
  WS_ERR_NOT_ORTHOGONAL = 4,
  WS_ERR_EMPTY_SAMPLES = 5,
  WS_ERR_DIMENSION_MISMATCH = 6,
  WS_ERR_TOO_FEW_SAMPLES = 7,
  WS_ERR_MULTIPLE_CLASSES = 8,
  WS_ERR_IDENTICAL_CLASSES = 9,
  WS_ERR_ANTIPODAL_CLASSES = 10,
  WS_ERR_NOT_RANK_DEFICIENT = 11,
  WS_ERR_Y_NOT_IN_NULL_SPACE = 12,
  WS_ERR_INVALID_CONFIG = 13,
  WS_ERR_INSUFFICIENT_DATA = 14,
  WS_ERR_EMPTY_PAIRS = 15,
  WS_ERR_TOO_FEW_FOLDS = 16,
  WS_ERR_PARSE = 17,
  WS_ERR_IO = 18,
  WS_ERR_UNKNOWN_CLASS = 19,
  WS_ERR_INTERNAL = 100
} ws_status;

typedef struct ws_matrix ws_matrix;
typedef struct ws_embeddings ws_embeddings;
typedef struct ws_plan ws_plan;

WS_API const char* ws_version(void);
WS_API const char* ws_status_name(ws_status status);
/* Message of the last failed call on this thread; "" if none. */
WS_API const char* ws_last_error(void);
WS_API void ws_string_free(char* s);
WS_API void ws_doubles_free(double* values);

/* ---- matrices ---------------------------------------------------------- */

WS_API ws_status ws_matrix_create(uint32_t rows, uint32_t cols, const double* row_major,
                                  ws_matrix** out);
WS_API ws_status ws_matrix_load(const char* path, ws_matrix** out);
WS_API ws_status ws_matrix_save(const ws_matrix* m, const char* path);
/* Reads a comma-separated text matrix (one row per line). */
WS_API ws_status ws_matrix_load_csv(const char* path, ws_matrix** out);
WS_API uint32_t ws_matrix_rows(const ws_matrix* m);
WS_API uint32_t ws_matrix_cols(const ws_matrix* m);
/* Copies rows*cols values in row-major order; len must be at least that. */
WS_API ws_status ws_matrix_copy(const ws_matrix* m, double* out, size_t len);
WS_API void ws_matrix_free(ws_matrix* m);

/* Singular values of m, non-increasing. Free with ws_doubles_free. */
WS_API ws_status ws_matrix_spectrum(const ws_matrix* m, double** values, size_t* count);

/* Loads a reference spectrum: either a matrix file (its singular values are
 * taken) or a JSON document {"values": [...]} / [...]. */
WS_API ws_status ws_spectrum_load(const char* path, double** values, size_t* count);

/* ---- embeddings -------------------------------------------------------- */

WS_API ws_status ws_embeddings_load(const char* path, ws_embeddings** out);
WS_API ws_status ws_embeddings_save(const ws_embeddings* e, const char* path);
WS_API size_t ws_embeddings_count(const ws_embeddings* e);
WS_API uint32_t ws_embeddings_dim(const ws_embeddings* e);
WS_API void ws_embeddings_free(ws_embeddings* e);

/* ---- synthetic worlds -------------------------------------------------- */

/* Generates the world described by the "world" block of the run configuration
 * at config_path. seed_override, when non-null, replaces world.seed.
 * manifest_json receives a JSON description including the seed used. */
WS_API ws_status ws_world_generate(const char* config_path, const uint64_t* seed_override,
                                   ws_matrix** weights, ws_embeddings** embeddings,
                                   char** manifest_json);

/* ---- surgery ----------------------------------------------------------- */

/* attack_json: {"kind": "sc"|"mc", "class_ids": [...], "stretch": bool}.
 * Every sample of the named classes is used to compute the surgery. */
WS_API ws_status ws_attack(const ws_matrix* weights, const ws_embeddings* embeddings,
                           const char* attack_json, ws_matrix** out, ws_plan** plan);
WS_API ws_status ws_plan_to_json(const ws_plan* plan, char** out_json);
WS_API ws_status ws_plan_from_json(const char* json, ws_plan** out);
WS_API void ws_plan_free(ws_plan* plan);

/* reference may be null, in which case the layer's own nonzero singular
 * values serve as the KDE sample. */
WS_API ws_status ws_hide(const ws_matrix* weights, const ws_plan* plan, const double* reference,
                         size_t reference_count, uint64_t seed, ws_matrix** out);

/* ---- detection --------------------------------------------------------- */

/* report_json receives the detection report. *suspected is set to 1 when the
 * layer is rank deficient, else 0. reference may be null. */
WS_API ws_status ws_detect(const ws_matrix* weights, const double* reference,
                           size_t reference_count, char** report_json, int* suspected);

/* ---- experiments ------------------------------------------------------- */

/* Runs the experiment described by the configuration file. seed_override,
 * when non-null, replaces the master seed. histogram_csv and output_dir may
 * be null if not wanted. */
WS_API ws_status ws_run_experiment(const char* config_path, const uint64_t* seed_override,
                                   char** report_json, char** histogram_csv, char** output_dir);

#ifdef __cplusplus
}
#endif

#endif  // WS_WEIGHT_SURGERY_H_
