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

#include "core/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <new>
#include <sstream>
#include <thread>

#include "core/errors.hpp"
#include "core/exec.hpp"
#include "core/rng.hpp"

namespace practise {

namespace {

double percentile(std::vector<double> sorted, double q) {
  // Nearest-rank on the sorted sample.
  const size_t n = sorted.size();
  size_t rank = static_cast<size_t>(std::ceil(q * n));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return sorted[rank - 1];
}

void run_forward(const ModelGraph& g, const Tensor& batch, int threads) {
  if (threads <= 1) {
    forward_eval(g, batch);
    return;
  }
  // Eval-mode forward is per-sample independent, so the batch splits across
  // workers exactly.
  const int64_t n = batch.dim(0);
  const int64_t per = batch.numel() / n;
  const int64_t workers = std::min<int64_t>(threads, n);
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int64_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        const int64_t lo = w * chunk;
        const int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) return;
        Tensor slice({hi - lo, batch.dim(1), batch.dim(2), batch.dim(3)});
        std::memcpy(slice.ptr(), batch.ptr() + lo * per,
                    sizeof(float) * (hi - lo) * per);
        forward_eval(g, slice);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void fill_latency_stats(LatencyReport& report) {
  if (report.run_ms.empty()) throw_measurement("no timed runs recorded");
  std::vector<double> sorted = report.run_ms;
  std::sort(sorted.begin(), sorted.end());
  report.timed_runs = static_cast<int64_t>(sorted.size());
  report.median_ms = percentile(sorted, 0.5);
  report.p10_ms = percentile(sorted, 0.1);
  report.p90_ms = percentile(sorted, 0.9);
}

LatencyReport measure_latency(const ModelGraph& graph,
                              const std::string& graph_id, int64_t batch_size,
                              int64_t warmup, int64_t runs, int threads,
                              uint64_t seed) {
  if (runs < 5) throw_measurement("latency measurement needs at least 5 runs");
  if (batch_size < 1) throw_measurement("batch size must be positive");
  if (warmup < 0) throw_measurement("warmup must be non-negative");
  if (threads < 1) throw_measurement("threads must be at least 1");
  auto violations = graph.validate();
  if (!violations.empty())
    throw_measurement("cannot measure an invalid graph: " +
                      violations[0].rule);

  LatencyReport report;
  report.graph_id = graph_id;
  report.batch_size = batch_size;
  report.warmup_runs = warmup;
  report.threads = threads;
  {
    std::ostringstream os;
    os << "cpu threads=" << threads << " (" << std::thread::hardware_concurrency()
       << " hw)";
    report.device = os.str();
  }

  try {
    Rng rng(Rng::mix(seed, "latency:" + graph_id));
    Tensor batch = Tensor::normal(
        {batch_size, graph.input.channels, graph.input.height,
         graph.input.width},
        rng);
    for (int64_t i = 0; i < warmup; ++i) run_forward(graph, batch, threads);
    for (int64_t i = 0; i < runs; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      run_forward(graph, batch, threads);
      auto t1 = std::chrono::steady_clock::now();
      report.run_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  } catch (const std::bad_alloc&) {
    throw_measurement("out of memory while timing " + graph_id);
  }
  fill_latency_stats(report);
  return report;
}

std::string LatencyReport::to_text() const {
  std::ostringstream os;
  os << "practise latency report\n";
  os << "graph " << graph_id << "\n";
  os << "device " << device << "\n";
  os << "batch " << batch_size << "\n";
  os << "threads " << threads << "\n";
  os << "warmup " << warmup_runs << "\n";
  os << "runs " << timed_runs << "\n";
  os << "median_ms " << median_ms << "\n";
  os << "p10_ms " << p10_ms << "\n";
  os << "p90_ms " << p90_ms << "\n";
  os << "run_ms";
  for (double v : run_ms) os << " " << v;
  os << "\n";
  return os.str();
}

}  // namespace practise
