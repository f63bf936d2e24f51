/* Copyright 2026 The attnseg Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C interface to the attnseg library.
 *
 * Objects are opaque handles created by *_load / *_create style calls and
 * released with the matching *_free. Every fallible call returns an
 * attnseg_status; on failure a message for the calling thread is available
 * from attnseg_last_error() until the next call on that thread. Strings
 * returned through char** out-parameters are heap allocated and released
 * with attnseg_string_free.
 */

#ifndef ATTNSEG_ATTNSEG_H_
#define ATTNSEG_ATTNSEG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(ATTNSEG_BUILDING_LIBRARY)
#    define ATTNSEG_API __declspec(dllexport)
#  else
#    define ATTNSEG_API __declspec(dllimport)
#  endif
#elif defined(__GNUC__) || defined(__clang__)
#  define ATTNSEG_API __attribute__((visibility("default")))
#else
#  define ATTNSEG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum attnseg_status {
  ATTNSEG_OK = 0,
  ATTNSEG_ERR_INVALID_ARGUMENT = 1,
  ATTNSEG_ERR_IO = 2,
  ATTNSEG_ERR_BAD_MAGIC = 3,
  ATTNSEG_ERR_UNSUPPORTED_VERSION = 4,
  ATTNSEG_ERR_SHAPE_MISMATCH = 5,
  ATTNSEG_ERR_NON_FINITE_VALUE = 6,
  ATTNSEG_ERR_INVALID_VALUE = 7,
  ATTNSEG_ERR_SCHEMA = 8,
  ATTNSEG_ERR_NORMALIZATION = 9,
  ATTNSEG_ERR_INTERNAL = 10
} attnseg_status;

typedef struct attnseg_tensor_set attnseg_tensor_set;
typedef struct attnseg_label_mask attnseg_label_mask;
typedef struct attnseg_binary_mask attnseg_binary_mask;
typedef struct attnseg_image attnseg_image;
typedef struct attnseg_evaluator attnseg_evaluator;

ATTNSEG_API const char* attnseg_version(void);
ATTNSEG_API const char* attnseg_last_error(void);
ATTNSEG_API const char* attnseg_status_name(attnseg_status status);
ATTNSEG_API void attnseg_string_free(char* str);

/* Caps worker threads for subsequent calls; values below 1 mean 1. The
 * initial value comes from ATTNSEG_THREADS or the hardware. */
ATTNSEG_API void attnseg_set_num_threads(int threads);
ATTNSEG_API int attnseg_get_num_threads(void);

/* ---- tensor sets ------------------------------------------------------ */

ATTNSEG_API attnseg_status attnseg_tensor_set_load(const char* manifest_path,
                                                   attnseg_tensor_set** out);
ATTNSEG_API void attnseg_tensor_set_free(attnseg_tensor_set* set);
ATTNSEG_API size_t attnseg_tensor_set_count(const attnseg_tensor_set* set);
ATTNSEG_API int attnseg_tensor_set_latent_resolution(const attnseg_tensor_set* set);
ATTNSEG_API const char* attnseg_tensor_set_image_id(const attnseg_tensor_set* set);
/* Per-resolution counts, resolution-proportional weights, and normalization
 * drift statistics as a JSON document. */
ATTNSEG_API attnseg_status attnseg_tensor_set_info_json(const attnseg_tensor_set* set,
                                                        char** out_json);

/* ---- segmentation ----------------------------------------------------- */

typedef struct attnseg_segment_config {
  int grid_size;            /* M, default 16 */
  int iterations;           /* N, default 3 */
  double tau;               /* merge threshold in nats, default 1.0; may be +inf */
  double epsilon;           /* KL clamp floor, default 1e-12 */
  int target_resolution;    /* 0: the manifest's latent resolution */
  int out_width;            /* default 512 */
  int out_height;           /* default 512 */
  const double* weights;    /* NULL: proportional to resolution */
  size_t weight_count;      /* must equal the tensor count when weights != NULL */
} attnseg_segment_config;

typedef struct attnseg_segment_stats {
  size_t num_proposals;
  size_t num_tensors;
  int target_resolution;
  double aggregate_seconds;
  double merge_seconds;
  double nms_seconds;
} attnseg_segment_stats;

ATTNSEG_API void attnseg_segment_config_default(attnseg_segment_config* config);

/* Aggregate, merge, and suppress. stats may be NULL. */
ATTNSEG_API attnseg_status attnseg_segment(const attnseg_tensor_set* set,
                                           const attnseg_segment_config* config,
                                           attnseg_label_mask** out_mask,
                                           attnseg_segment_stats* stats);

/* ---- label masks ------------------------------------------------------ */

ATTNSEG_API attnseg_status attnseg_label_mask_load(const char* path,
                                                   attnseg_label_mask** out);
/* PGM when num_labels <= 255, raw u16 otherwise; written atomically. */
ATTNSEG_API attnseg_status attnseg_label_mask_save(const attnseg_label_mask* mask,
                                                   const char* path);
/* ".pgm" or ".lbl", matching the format attnseg_label_mask_save writes. */
ATTNSEG_API const char* attnseg_label_mask_extension(const attnseg_label_mask* mask);
ATTNSEG_API void attnseg_label_mask_free(attnseg_label_mask* mask);
ATTNSEG_API int attnseg_label_mask_width(const attnseg_label_mask* mask);
ATTNSEG_API int attnseg_label_mask_height(const attnseg_label_mask* mask);
ATTNSEG_API int attnseg_label_mask_num_labels(const attnseg_label_mask* mask);
/* Row-major labels, width * height entries, valid until the mask is freed. */
ATTNSEG_API const uint16_t* attnseg_label_mask_data(const attnseg_label_mask* mask);

ATTNSEG_API attnseg_status attnseg_select_region(const attnseg_label_mask* mask, int x,
                                                 int y, attnseg_binary_mask** out);
/* Nonzero labels become members. */
ATTNSEG_API attnseg_status attnseg_binary_mask_from_labels(const attnseg_label_mask* mask,
                                                           attnseg_binary_mask** out);
ATTNSEG_API attnseg_status attnseg_binary_mask_save(const attnseg_binary_mask* mask,
                                                    const char* path);
ATTNSEG_API size_t attnseg_binary_mask_count(const attnseg_binary_mask* mask);
ATTNSEG_API void attnseg_binary_mask_free(attnseg_binary_mask* mask);

/* ---- images and overlays ---------------------------------------------- */

ATTNSEG_API attnseg_status attnseg_image_load(const char* path, attnseg_image** out);
ATTNSEG_API attnseg_status attnseg_image_save_png(const attnseg_image* image,
                                                  const char* path);
ATTNSEG_API void attnseg_image_free(attnseg_image* image);
ATTNSEG_API int attnseg_image_width(const attnseg_image* image);
ATTNSEG_API int attnseg_image_height(const attnseg_image* image);

/* truth may be NULL. fill_opacity in [0, 1]; 0 draws boundaries only. */
ATTNSEG_API attnseg_status attnseg_render_overlay(const attnseg_image* image,
                                                  const attnseg_label_mask* mask,
                                                  const attnseg_binary_mask* truth,
                                                  double fill_opacity,
                                                  attnseg_image** out);

/* ---- evaluation ------------------------------------------------------- */

typedef enum attnseg_eval_mode {
  ATTNSEG_EVAL_MATCHED = 0,
  ATTNSEG_EVAL_POINT = 1
} attnseg_eval_mode;

/* background: truth label excluded from scoring, or -1 to score every label. */
ATTNSEG_API attnseg_status attnseg_evaluator_create(attnseg_eval_mode mode,
                                                    int background,
                                                    attnseg_evaluator** out);
ATTNSEG_API void attnseg_evaluator_free(attnseg_evaluator* evaluator);
ATTNSEG_API attnseg_status attnseg_evaluator_add(attnseg_evaluator* evaluator,
                                                 const char* name,
                                                 const attnseg_label_mask* prediction,
                                                 const attnseg_label_mask* truth);
/* Computes the report over every added sample. */
ATTNSEG_API attnseg_status attnseg_evaluator_report(const attnseg_evaluator* evaluator,
                                                    char** out_json, char** out_text);

/* ---- synthetic fixtures ----------------------------------------------- */

typedef struct attnseg_synth_config {
  int regions;         /* K, default 2 */
  double noise;        /* alpha in [0, 1], default 0 */
  uint64_t seed;       /* default 0 */
  int resolution;      /* default 64 */
  int block;           /* band width granularity in pixels, default resolution / 8 */
  const char* census;  /* "64:5,32:5,16:5,8:1"; NULL for the default census */
} attnseg_synth_config;

ATTNSEG_API void attnseg_synth_config_default(attnseg_synth_config* config);

/* Writes out_dir/manifest.json, the ADZT files, and the planted region map
 * as a PGM at truth_path (NULL: out_dir/truth/<image_id>.pgm). The image id
 * is copied to image_id_out when non-NULL. */
ATTNSEG_API attnseg_status attnseg_synth_generate(const attnseg_synth_config* config,
                                                  const char* out_dir,
                                                  const char* truth_path,
                                                  char** image_id_out);

#ifdef __cplusplus
}
#endif

#endif /* ATTNSEG_ATTNSEG_H_ */
