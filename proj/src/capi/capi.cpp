// Copyright 2026 The Practise Authors. All Rights Reserved.
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

#include "practise/practise.h"

#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "core/bench.hpp"
#include "core/builders.hpp"
#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/errors.hpp"
#include "core/graph.hpp"
#include "core/pipeline.hpp"
#include "core/plan.hpp"
#include "core/recovery.hpp"
#include "core/tinyset.hpp"

struct practise_graph {
  practise::ModelGraph graph;
};

struct practise_tinyset {
  practise::TinySet set;
};

struct practise_plan {
  practise::CompressionPlan plan;
};

namespace {

thread_local std::string g_last_error;

practise_status to_status(practise::ErrorKind kind) {
  switch (kind) {
    case practise::ErrorKind::Config: return PRACTISE_ERR_CONFIG;
    case practise::ErrorKind::Data: return PRACTISE_ERR_DATA;
    case practise::ErrorKind::Training: return PRACTISE_ERR_TRAINING;
    case practise::ErrorKind::Measurement: return PRACTISE_ERR_MEASUREMENT;
    case practise::ErrorKind::Internal: return PRACTISE_ERR_INTERNAL;
  }
  return PRACTISE_ERR_INTERNAL;
}

template <typename Fn>
practise_status wrap(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PRACTISE_OK;
  } catch (const practise::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PRACTISE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PRACTISE_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

practise_status require(bool ok, const char* message) {
  if (ok) return PRACTISE_OK;
  g_last_error = message;
  return PRACTISE_ERR_CONFIG;
}

practise::AugmentPolicy parse_augment(const char* name) {
  if (name == nullptr || *name == '\0') return practise::AugmentPolicy::None;
  auto policy = practise::augment_policy_from_name(name);
  if (!policy)
    practise::throw_config(std::string("unknown augment policy: ") + name);
  return *policy;
}

practise::Recipe::Mode parse_mode(const char* name) {
  auto mode = practise::recipe_mode_from_name(name ? name : "");
  if (!mode || *mode == practise::Recipe::Mode::Synthetic)
    practise::throw_config("mode must be kshot or random_n");
  return *mode;
}

}  // namespace

extern "C" {

const char* practise_version(void) { return practise::kToolVersion; }

const char* practise_last_error(void) { return g_last_error.c_str(); }

void practise_string_free(char* s) { delete[] s; }

practise_status practise_graph_build(const char* name, const char* variant,
                                     uint64_t seed, practise_graph** out) {
  if (auto s = require(name && variant && out, "null argument")) return s;
  return wrap([&] {
    *out =
        new practise_graph{practise::build_architecture(name, variant, seed)};
  });
}

practise_status practise_graph_load(const char* dir, practise_graph** out) {
  if (auto s = require(dir && out, "null argument")) return s;
  return wrap([&] { *out = new practise_graph{practise::load_checkpoint(dir)}; });
}

practise_status practise_graph_save(const practise_graph* graph,
                                    const char* dir) {
  if (auto s = require(graph && dir, "null argument")) return s;
  return wrap([&] { practise::save_checkpoint(graph->graph, dir); });
}

void practise_graph_free(practise_graph* graph) { delete graph; }

practise_status practise_graph_cost(const practise_graph* graph,
                                    uint64_t* params, uint64_t* macs) {
  if (auto s = require(graph && params && macs, "null argument")) return s;
  return wrap([&] {
    practise::CostReport r = practise::count_cost(graph->graph);
    *params = r.params;
    *macs = r.macs;
  });
}

practise_status practise_graph_validate(const practise_graph* graph,
                                        char** report) {
  if (auto s = require(graph && report, "null argument")) return s;
  return wrap([&] {
    std::ostringstream os;
    for (const auto& v : graph->graph.validate())
      os << v.rule << " at '" << v.node << "': " << v.detail << "\n";
    *report = dup_string(os.str());
  });
}

practise_status practise_plan_parse(const char* text, practise_plan** out) {
  if (auto s = require(text && out, "null argument")) return s;
  return wrap([&] {
    *out = new practise_plan{practise::plan_from_text(text)};
    practise::load_plan_masks((*out)->plan, std::filesystem::current_path());
  });
}

practise_status practise_plan_format(const practise_plan* plan, char** text) {
  if (auto s = require(plan && text, "null argument")) return s;
  return wrap([&] { *text = dup_string(practise::plan_to_text(plan->plan)); });
}

void practise_plan_free(practise_plan* plan) { delete plan; }

practise_status practise_tinyset_gaussian(int64_t count, int64_t channels,
                                          int64_t height, int64_t width,
                                          uint64_t seed,
                                          practise_tinyset** out) {
  if (auto s = require(out != nullptr, "null argument")) return s;
  return wrap([&] {
    *out = new practise_tinyset{
        practise::synth_gaussian(count, channels, height, width, seed)};
  });
}

practise_status practise_tinyset_patterns(const char* mode, int64_t k_or_n,
                                          uint64_t seed,
                                          practise_tinyset** out) {
  if (auto s = require(mode && out, "null argument")) return s;
  return wrap([&] {
    practise::ImageSource src =
        practise::synth_patterns(std::max<int64_t>(10 * k_or_n, 100), 0);
    *out = new practise_tinyset{
        practise::sample_tinyset(src, parse_mode(mode), k_or_n, seed)};
  });
}

practise_status practise_tinyset_from_folder(const char* path,
                                             const char* mode, int64_t k_or_n,
                                             uint64_t seed,
                                             practise_tinyset** out) {
  if (auto s = require(path && mode && out, "null argument")) return s;
  return wrap([&] {
    practise::ImageSource src = practise::load_image_folder(path);
    *out = new practise_tinyset{
        practise::sample_tinyset(src, parse_mode(mode), k_or_n, seed)};
  });
}

practise_status practise_tinyset_load(const char* dir,
                                      practise_tinyset** out) {
  if (auto s = require(dir && out, "null argument")) return s;
  return wrap([&] { *out = new practise_tinyset{practise::load_tinyset(dir)}; });
}

practise_status practise_tinyset_save(const practise_tinyset* set,
                                      const char* dir) {
  if (auto s = require(set && dir, "null argument")) return s;
  return wrap([&] { practise::save_tinyset(set->set, dir); });
}

void practise_tinyset_free(practise_tinyset* set) { delete set; }

practise_status practise_tinyset_size(const practise_tinyset* set,
                                      size_t* out) {
  if (auto s = require(set && out, "null argument")) return s;
  *out = set->set.size();
  return PRACTISE_OK;
}

void practise_mimic_config_default(practise_mimic_config* cfg) {
  if (!cfg) return;
  practise::MimicConfig d;
  cfg->learning_rate = d.learning_rate;
  cfg->batch_size = d.batch_size;
  cfg->max_epochs = d.max_epochs;
  cfg->patience = d.patience;
  cfg->seed = d.seed;
  cfg->augment = "none";
  cfg->update_all_bn = d.update_all_bn_stats ? 1 : 0;
}

void practise_finetune_config_default(practise_finetune_config* cfg) {
  if (!cfg) return;
  practise::FinetuneConfig d;
  cfg->learning_rate = d.learning_rate;
  cfg->momentum = d.momentum;
  cfg->batch_size = d.batch_size;
  cfg->epochs = d.epochs;
  cfg->beta = d.beta;
  cfg->seed = d.seed;
  cfg->augment = "none";
}

practise_status practise_compress(const practise_graph* teacher,
                                  const practise_plan* plan,
                                  const practise_tinyset* data,
                                  const practise_mimic_config* cfg,
                                  int64_t freeze_front_k, practise_graph** out,
                                  char** report) {
  if (auto s = require(teacher && plan && data && out, "null argument"))
    return s;
  return wrap([&] {
    practise::MimicConfig mimic;
    if (cfg) {
      mimic.learning_rate = cfg->learning_rate;
      mimic.batch_size = cfg->batch_size;
      mimic.max_epochs = cfg->max_epochs;
      mimic.patience = cfg->patience;
      mimic.seed = cfg->seed;
      mimic.augment = parse_augment(cfg->augment);
      mimic.update_all_bn_stats = cfg->update_all_bn != 0;
    }
    practise::PractiseReport rep;
    practise::ModelGraph result = practise::run_practise(
        teacher->graph, plan->plan, data->set, mimic, freeze_front_k, &rep);
    *out = new practise_graph{std::move(result)};
    if (report) *report = dup_string(rep.to_text());
  });
}

practise_status practise_finetune(const practise_graph* student,
                                  const practise_graph* teacher,
                                  const practise_tinyset* data,
                                  const practise_finetune_config* cfg,
                                  practise_graph** out) {
  if (auto s = require(student && teacher && data && out, "null argument"))
    return s;
  return wrap([&] {
    practise::FinetuneConfig ft;
    if (cfg) {
      ft.learning_rate = cfg->learning_rate;
      ft.momentum = cfg->momentum;
      ft.batch_size = cfg->batch_size;
      ft.epochs = cfg->epochs;
      ft.beta = cfg->beta;
      ft.seed = cfg->seed;
      ft.augment = parse_augment(cfg->augment);
    }
    *out = new practise_graph{
        practise::finetune_kd(student->graph, teacher->graph, data->set, ft)};
  });
}

practise_status practise_evaluate(const practise_graph* graph,
                                  const practise_tinyset* data, double* top1,
                                  double* top5) {
  if (auto s = require(graph && data && top1 && top5, "null argument"))
    return s;
  return wrap([&] {
    practise::Accuracy acc = practise::evaluate(graph->graph, data->set);
    *top1 = acc.top1;
    *top5 = acc.top5;
  });
}

practise_status practise_measure_latency(const practise_graph* graph,
                                         const char* graph_id,
                                         int64_t batch_size, int64_t warmup,
                                         int64_t runs, int threads,
                                         char** report) {
  if (auto s = require(graph && graph_id, "null argument")) return s;
  return wrap([&] {
    practise::LatencyReport r = practise::measure_latency(
        graph->graph, graph_id, batch_size, warmup, runs, threads);
    if (report) *report = dup_string(r.to_text());
  });
}

practise_status practise_run_pipeline(const char* config_path,
                                      const char* const* overrides,
                                      size_t n_overrides, char** manifest) {
  if (auto s = require(config_path != nullptr, "null argument")) return s;
  return wrap([&] {
    std::vector<std::string> ov;
    for (size_t i = 0; i < n_overrides; ++i)
      if (overrides && overrides[i]) ov.push_back(overrides[i]);
    practise::PipelineResult result = practise::run_pipeline(config_path, ov);
    if (manifest) *manifest = dup_string(result.manifest_text);
  });
}

}  // extern "C"
