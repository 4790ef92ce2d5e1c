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

#pragma once

#include <string>
#include <vector>

#include "core/graph.hpp"
#include "core/plan.hpp"
#include "core/tinyset.hpp"

namespace practise {

struct MimicConfig {
  float learning_rate = 1e-4f;
  int64_t batch_size = 64;  // clamped to the tiny-set size
  int64_t max_epochs = 1000;
  int64_t patience = 10;
  uint64_t seed = 0;
  AugmentPolicy augment = AugmentPolicy::None;
  // Default: only the site's BN runs on batch statistics; optionally all
  // student BNs do.
  bool update_all_bn_stats = false;
};

struct FinetuneConfig {
  float learning_rate = 1e-4f;
  float momentum = 0.0f;
  int64_t batch_size = 256;  // clamped to the tiny-set size
  int64_t epochs = 100;
  float beta = 100.0f;
  uint64_t seed = 0;
  AugmentPolicy augment = AugmentPolicy::None;
};

// Unstructured recovery: the conv's effective weight is
// (base * u) .* mask and only u trains.
struct MaskedSite {
  std::string conv;
  Tensor base;
  Tensor u;     // [c_in, c_in, 1, 1], identity at start
  Tensor mask;  // shaped like base
};

// One feature-mimicking problem: frozen teacher, student with trainable
// adaptor convs (or masked compositions), tap pairs to match.
struct MimicJob {
  const ModelGraph* teacher = nullptr;
  ModelGraph* student = nullptr;
  std::vector<std::string> trainable;  // adaptor conv node ids
  std::vector<std::pair<std::string, std::string>> taps;  // (teacher, student)
  std::vector<std::string> site_bn;  // BNs run on batch statistics
  std::vector<MaskedSite> masked;
};

struct TrainResult {
  // loss_trace[0] is the eval-mode loss before any update; entries 1..E are
  // train-mode epoch means. The returned state is the trace argmin.
  std::vector<double> loss_trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int64_t epochs_run = 0;
  double seconds = 0.0;
};

// Adam on the adaptor weights only; early-stops after `patience` epochs
// without a new best and restores the best state.
TrainResult train_adaptors(MimicJob& job, const TinySet& data,
                           const MimicConfig& cfg);

// Eval-mode tap loss of the job's current student state (used for the
// recorded initial/final losses; exposed for tests).
double mimic_eval_loss(const MimicJob& job, const TinySet& data,
                       int64_t batch_size);

struct SiteReport {
  std::string site;
  int64_t epochs = 0;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  double seconds = 0.0;
};

struct PractiseReport {
  std::vector<SiteReport> sites;
  double seconds = 0.0;
  std::string to_text() const;
};

// Front-to-back insert -> train -> merge over every site of the plan; the
// first `freeze_front_k` sites are rewritten with init-only adaptors and no
// training. Returns a graph with no adaptors left.
ModelGraph run_practise(const ModelGraph& teacher, const CompressionPlan& plan,
                        const TinySet& data, const MimicConfig& cfg,
                        int64_t freeze_front_k = 0,
                        PractiseReport* report = nullptr);

// Whole-network finetuning with cross entropy plus beta * MSE on the
// penultimate features of the frozen teacher.
ModelGraph finetune_kd(const ModelGraph& student, const ModelGraph& teacher,
                       const TinySet& data, const FinetuneConfig& cfg);

struct Accuracy {
  double top1 = 0.0;
  double top5 = 0.0;
};

// Top-k accuracy in percent; argmax ties resolve to the lowest index.
Accuracy evaluate(const ModelGraph& g, const TinySet& data,
                  int64_t batch_size = 64);

}  // namespace practise
