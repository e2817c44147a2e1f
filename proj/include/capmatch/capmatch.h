/*
 * Copyright 2026 The capmatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CAPMATCH_CAPMATCH_H_
#define CAPMATCH_CAPMATCH_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CM_API __declspec(dllexport)
#else
#define CM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cm_status {
  CM_OK = 0,
  CM_INVALID_ARGUMENT,
  CM_INVALID_CONFIG,
  CM_ZERO_NORM_ROW,
  CM_DETACHED_LOSS,
  CM_DOUBLE_BACKWARD,
  CM_IO_ERROR,
  CM_INVARIANT_VIOLATION,
  CM_BAD_MAGIC,
  CM_VERSION_MISMATCH,
  CM_SHAPE_MISMATCH,
  CM_NON_FINITE_VALUE,
  CM_SPLIT_MISUSE,
  CM_ARCHIVE_MISMATCH,
  CM_DIMENSION_MISMATCH,
  CM_NO_CAPTIONS,
  CM_SEQUENCE_TOO_LONG,
  CM_NON_SQUARE,
  CM_NON_POSITIVE_TEMPERATURE,
  CM_EMPTY_CORPUS,
  CM_INTERNAL
} cm_status;

typedef struct cm_archive cm_archive;
typedef struct cm_model cm_model;
typedef struct cm_trainer cm_trainer;

/* Errors. The message of the last failure on the calling thread stays valid
   until the next failing call on that thread. */
CM_API const char* cm_status_name(cm_status status);
CM_API const char* cm_last_error(void);

/* Strings returned through char** are owned by the caller. */
CM_API void cm_free_string(char* s);

/* Configuration: flat JSON objects of config keys. */
CM_API cm_status cm_default_config(char** out_json);
/* Help text listing every key with its default. */
CM_API cm_status cm_config_help(char** out_text);
/* Defaults overlaid with `config_json` (may be NULL), validated. */
CM_API cm_status cm_config_resolve(const char* config_json, char** out_json);

/* Archives. */
CM_API cm_status cm_archive_synthesize(const char* config_json, cm_archive** out);
CM_API cm_status cm_archive_read(const char* dir, size_t max_words, cm_archive** out);
CM_API cm_status cm_archive_write(const cm_archive* archive, const char* dir);
CM_API cm_status cm_archive_summary(const cm_archive* archive, char** out_json);
CM_API void cm_archive_free(cm_archive* archive);

/* {video_id: [caption indices]} for the top-k captions of every video. */
CM_API cm_status cm_filter_captions(const cm_archive* archive, size_t k, char** out_json);

/* Models: a resolved config plus parameters. */
CM_API cm_status cm_model_create(const char* config_json, size_t dim, cm_model** out);
CM_API cm_status cm_model_load(const char* checkpoint_dir, cm_model** out);
CM_API cm_status cm_model_config(const cm_model* model, char** out_json);
CM_API void cm_model_free(cm_model* model);

/* Training. `val` may be NULL. */
CM_API cm_status cm_trainer_create(const char* config_json, const cm_archive* train,
                                   const cm_archive* val, cm_trainer** out);
CM_API cm_status cm_trainer_resume(const char* checkpoint_dir, const cm_archive* train,
                                   const cm_archive* val, cm_trainer** out);
/* Runs up to max_steps batches, all remaining when max_steps < 0. */
CM_API cm_status cm_trainer_run(cm_trainer* trainer, int64_t max_steps, int* finished);
/* Per-epoch losses and validation R@1 as JSON. */
CM_API cm_status cm_trainer_report(const cm_trainer* trainer, char** out_json);
CM_API cm_status cm_trainer_save(const cm_trainer* trainer, const char* dir);
/* Snapshot of the current parameters. */
CM_API cm_status cm_trainer_model(const cm_trainer* trainer, cm_model** out);
CM_API void cm_trainer_free(cm_trainer* trainer);

/* Evaluation. `options_json` (may be NULL) accepts
   {"format": "json"|"table", "direction": "t2v"|"v2t"|"both", "ranks": bool,
    "alpha": number, "threads": int}. */
CM_API cm_status cm_evaluate(const cm_model* model, const cm_archive* archive,
                             const char* options_json, char** out_text);
/* [{"id": ..., "score": ...}] for the query with id `query_id`. */
CM_API cm_status cm_retrieve(const cm_model* model, const cm_archive* archive,
                             const char* query_id, size_t k, const char* options_json,
                             char** out_json);

/* Ablation grid over both matching modes. options_json:
   {"seeds": [..], "format": "json"|"table"}. */
CM_API cm_status cm_ablate(const cm_archive* train, const cm_archive* val,
                           const char* config_json, const char* options_json, char** out_text);

/* Finite-difference gradient suite; *passed is set to 1 when every group is
   under the threshold. */
CM_API cm_status cm_gradcheck(int f64, char** out_text, int* passed);

#ifdef __cplusplus
}
#endif

#endif  // CAPMATCH_CAPMATCH_H_
