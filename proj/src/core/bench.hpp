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

namespace practise {

struct LatencyReport {
  std::string graph_id;
  std::string device;
  int64_t batch_size = 0;
  int64_t warmup_runs = 0;
  int64_t timed_runs = 0;
  int threads = 1;
  std::vector<double> run_ms;  // timed runs only
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;

  std::string to_text() const;
};

// `warmup` untimed forwards, then `runs` timed forwards of a fixed random
// batch under a monotonic clock. threads > 1 splits the batch across that
// many workers. Out-of-memory surfaces as a measurement error, not a crash.
LatencyReport measure_latency(const ModelGraph& graph,
                              const std::string& graph_id, int64_t batch_size,
                              int64_t warmup, int64_t runs, int threads,
                              uint64_t seed = 0);

// Statistics helper (pure function of the recorded times); exposed so the
// report math is testable on its own.
void fill_latency_stats(LatencyReport& report);

}  // namespace practise
