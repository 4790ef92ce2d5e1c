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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "core/graph.hpp"

namespace practise {

enum class ParamSlot { ConvWeight, ConvBias, FCWeight, FCBias, BNGamma, BNBeta };

using ParamKey = std::pair<std::string, ParamSlot>;

// Which tensor a parameter key refers to; throws if the node has no such slot.
Tensor& param_tensor(ModelGraph& g, const ParamKey& key);
const Tensor& param_tensor(const ModelGraph& g, const ParamKey& key);

struct ForwardOptions {
  // BN nodes evaluated with batch statistics instead of running statistics.
  std::set<std::string> batch_stat_bn;
  bool all_bn_batch_stats = false;
  // Retain per-node activations so backward() can run afterwards.
  bool keep_state = false;
  // Activations to return alongside the logits.
  std::vector<std::string> taps;
  // When non-empty, only ancestors of these nodes are computed; the logits
  // are empty unless the sink is among them.
  std::vector<std::string> restrict_to;
};

struct ForwardResult {
  Tensor logits;
  std::map<std::string, Tensor> taps;
};

// Batch statistics observed by BNs run in batch-stat mode, to be folded into
// the graph's running statistics by apply_bn_updates.
struct BNBatchStats {
  struct Entry {
    Tensor mean;
    Tensor var;  // biased
    int64_t count = 0;  // N*H*W per channel
  };
  std::map<std::string, Entry> stats;
};

// running <- (1 - momentum) * running + momentum * batch; the variance uses
// the unbiased estimate (n/(n-1)) when n > 1.
void apply_bn_updates(ModelGraph& g, const BNBatchStats& stats,
                      float momentum = 0.1f);

// Executes a graph on one [N,C,H,W] batch. The graph is never mutated; BN
// running-stat updates are reported through `stats_out` instead.
class Executor {
 public:
  ForwardResult forward(const ModelGraph& g, const Tensor& batch,
                        const ForwardOptions& opts,
                        BNBatchStats* stats_out = nullptr);

  // Gradients of a scalar loss w.r.t. the wanted parameters, where the loss
  // gradient w.r.t. selected node outputs is given by `seeds`. Requires the
  // previous forward() to have run with keep_state.
  std::map<std::string, Tensor> backward(
      const ModelGraph& g, const std::map<std::string, Tensor>& seeds,
      const std::set<ParamKey>& wanted,
      std::map<ParamKey, Tensor>& grads_out);

  const Tensor& output_of(const std::string& id) const;

 private:
  std::map<std::string, Tensor> outputs_;
  std::map<std::string, std::vector<int32_t>> pool_argmax_;
  std::map<std::string, std::pair<Tensor, Tensor>> bn_batch_;  // mean, var
  std::set<std::string> bn_batch_mode_;
  Tensor batch_;
  bool has_state_ = false;
};

// Convenience wrapper: deterministic eval-mode forward.
ForwardResult forward_eval(const ModelGraph& g, const Tensor& batch,
                           const std::vector<std::string>& taps = {});

// Low-level kernels, exposed for the latency harness and tests.
namespace kernels {
// C[M,N] = A[M,K] * B[K,N]; accumulate adds into C instead of overwriting.
void gemm(int64_t m, int64_t n, int64_t k, const float* a, const float* b,
          float* c, bool accumulate);

Tensor conv2d(const Tensor& input, const ConvSpec& spec);  // [N,C,H,W]
}  // namespace kernels

}  // namespace practise
