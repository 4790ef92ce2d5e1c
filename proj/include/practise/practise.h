/* Copyright 2026 The Practise Authors. All Rights Reserved.
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

/* C interface to the practise CNN compression core: opaque handles, status
 * codes, and a thread-local last-error message. Strings returned through
 * char** are owned by the caller and released with practise_string_free. */

#ifndef PRACTISE_PRACTISE_H_
#define PRACTISE_PRACTISE_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PRACTISE_API __declspec(dllexport)
#else
#define PRACTISE_API __attribute__((visibility("default")))
#endif

/* Status values double as CLI exit codes. */
typedef enum practise_status {
  PRACTISE_OK = 0,
  PRACTISE_ERR_INTERNAL = 1,
  PRACTISE_ERR_CONFIG = 2,
  PRACTISE_ERR_DATA = 3,
  PRACTISE_ERR_TRAINING = 4,
  PRACTISE_ERR_MEASUREMENT = 5
} practise_status;

typedef struct practise_graph practise_graph;
typedef struct practise_tinyset practise_tinyset;
typedef struct practise_plan practise_plan;

PRACTISE_API const char* practise_version(void);
/* Message for the most recent failure on this thread; empty if none. */
PRACTISE_API const char* practise_last_error(void);
PRACTISE_API void practise_string_free(char* s);

/* ---- model graphs ---- */

/* name: resnet34 | resnet50 | resnet56 | vgg16 | mobilenetv2
 * variant: imagenet | cifar (the pair must be defined) */
PRACTISE_API practise_status practise_graph_build(const char* name,
                                                  const char* variant,
                                                  uint64_t seed,
                                                  practise_graph** out);
PRACTISE_API practise_status practise_graph_load(const char* dir,
                                                 practise_graph** out);
PRACTISE_API practise_status practise_graph_save(const practise_graph* graph,
                                                 const char* dir);
PRACTISE_API void practise_graph_free(practise_graph* graph);

PRACTISE_API practise_status practise_graph_cost(const practise_graph* graph,
                                                 uint64_t* params,
                                                 uint64_t* macs);
/* *report receives one violation per line; empty string when the graph is
 * valid. */
PRACTISE_API practise_status practise_graph_validate(
    const practise_graph* graph, char** report);

/* ---- compression plans ---- */

PRACTISE_API practise_status practise_plan_parse(const char* text,
                                                 practise_plan** out);
PRACTISE_API practise_status practise_plan_format(const practise_plan* plan,
                                                  char** text);
PRACTISE_API void practise_plan_free(practise_plan* plan);

/* ---- tiny sets ---- */

PRACTISE_API practise_status practise_tinyset_gaussian(
    int64_t count, int64_t channels, int64_t height, int64_t width,
    uint64_t seed, practise_tinyset** out);
/* mode: kshot | random_n */
PRACTISE_API practise_status practise_tinyset_patterns(
    const char* mode, int64_t k_or_n, uint64_t seed, practise_tinyset** out);
PRACTISE_API practise_status practise_tinyset_from_folder(
    const char* path, const char* mode, int64_t k_or_n, uint64_t seed,
    practise_tinyset** out);
PRACTISE_API practise_status practise_tinyset_load(const char* dir,
                                                   practise_tinyset** out);
PRACTISE_API practise_status practise_tinyset_save(const practise_tinyset* set,
                                                   const char* dir);
PRACTISE_API void practise_tinyset_free(practise_tinyset* set);
PRACTISE_API practise_status practise_tinyset_size(const practise_tinyset* set,
                                                   size_t* out);

/* ---- training configuration ---- */

typedef struct practise_mimic_config {
  float learning_rate;
  int64_t batch_size; /* clamped to the tiny-set size */
  int64_t max_epochs;
  int64_t patience;
  uint64_t seed;
  const char* augment; /* none | imagenet | cifar */
  int update_all_bn;
} practise_mimic_config;

typedef struct practise_finetune_config {
  float learning_rate;
  float momentum;
  int64_t batch_size;
  int64_t epochs;
  float beta;
  uint64_t seed;
  const char* augment;
} practise_finetune_config;

PRACTISE_API void practise_mimic_config_default(practise_mimic_config* cfg);
PRACTISE_API void practise_finetune_config_default(
    practise_finetune_config* cfg);

/* ---- operations ---- */

/* Layer-/stage-wise recovery of `plan` against the frozen teacher; *report
 * (optional) receives the machine-parsable per-site recovery report. */
PRACTISE_API practise_status practise_compress(
    const practise_graph* teacher, const practise_plan* plan,
    const practise_tinyset* data, const practise_mimic_config* cfg,
    int64_t freeze_front_k, practise_graph** out, char** report);

PRACTISE_API practise_status practise_finetune(
    const practise_graph* student, const practise_graph* teacher,
    const practise_tinyset* data, const practise_finetune_config* cfg,
    practise_graph** out);

PRACTISE_API practise_status practise_evaluate(const practise_graph* graph,
                                               const practise_tinyset* data,
                                               double* top1, double* top5);

PRACTISE_API practise_status practise_measure_latency(
    const practise_graph* graph, const char* graph_id, int64_t batch_size,
    int64_t warmup, int64_t runs, int threads, char** report);

/* Config-driven end-to-end run; overrides are "key=value" strings that win
 * over file values. *manifest (optional) receives the run manifest text. */
PRACTISE_API practise_status practise_run_pipeline(
    const char* config_path, const char* const* overrides, size_t n_overrides,
    char** manifest);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PRACTISE_PRACTISE_H_ */
