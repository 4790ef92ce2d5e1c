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

#include <optional>
#include <string>
#include <vector>

#include "core/graph.hpp"

namespace practise {

// A 1x1 bias-free conv spliced into the graph for recovery training. Every
// adaptor knows where it merges back; `Pre` composes into the input side of
// each target, `Post` into the output side.
struct Adaptor {
  std::string id;
  std::string site;
  enum class Side { Pre, Post } side = Side::Pre;
  std::vector<std::string> merge_targets;  // Conv (or FC) node ids
};

// Result of an insertion: the adaptors, the mimic tap pairs
// (teacher node, student node), and the BNs that train with batch statistics.
struct InsertResult {
  std::vector<Adaptor> adaptors;
  std::vector<std::pair<std::string, std::string>> taps;
  std::vector<std::string> site_bn;
};

enum class AdaptorInit { Identity, ChannelSelect };

// Reduces the feature map produced by conv `site` to `keep.size()` channels
// by splicing a 1x1 pair around it (plus one adaptor after the downsample
// conv at block-boundary sites). `keep` is required for ChannelSelect and
// must be strictly increasing; Identity requires keep == all channels.
InsertResult insert_channel_adaptors(ModelGraph& g, const std::string& site,
                                     AdaptorInit init,
                                     const std::vector<int64_t>& keep);

// Identity-initialized adaptors before the first conv of every block
// downstream of a dropped block (and the next stage's first conv and
// downsample conv). Call after drop_block; `dropped` names the removed block.
InsertResult insert_block_adaptors(ModelGraph& g, const BlockTag& dropped);

// W' such that the adaptor followed by (Pre) or following (Post) the target
// conv computes the same function as the returned conv alone.
ConvSpec merge_adjacent_linear(const Tensor& adaptor_weight,
                               const ConvSpec& target, Adaptor::Side side);

// Applies and removes one adaptor in the graph (handles FC targets and
// multi-target compositions). Adaptors must be merged innermost-first; use
// merge_all_adaptors for that ordering.
void merge_adaptor(ModelGraph& g, const Adaptor& adaptor);
void merge_all_adaptors(ModelGraph& g, const std::vector<Adaptor>& adaptors);

// Eval-mode BN absorbed into the preceding conv.
ConvSpec fold_bn(const ConvSpec& conv, const BNSpec& bn);
// Folds every conv->BN pair in the graph (latency experiments).
void fold_all_bn(ModelGraph& g);

// Removes one inner block, rewiring its input to its consumers.
void drop_block(ModelGraph& g, const BlockTag& tag);

// Indices of the N filters with the largest l1 norm, ascending; ties go to
// the lower index.
std::vector<int64_t> select_keep_channels(const ConvSpec& conv, int64_t n);

// Hard structural pruning at a chain site: producer keeps rows, site BN
// keeps entries, consumers keep input columns.
void prune_channels(ModelGraph& g, const std::string& site,
                    const std::vector<int64_t>& keep);

// (W * U) .* M -- the masked composition used by unstructured recovery.
// U is [c_in, c_in'] (optionally [c,c,1,1]); M matches the composed shape.
Tensor compose_and_mask(const Tensor& w, const Tensor& u, const Tensor& mask);

// SVD factorization of a conv into a k x k conv with `rank` filters followed
// by a 1x1 conv; rank is the smallest with cumulative squared-singular-value
// energy ratio >= threshold.
struct LowRankResult {
  ConvSpec spatial;    // [rank, in, kH, kW], original stride/pad
  ConvSpec pointwise;  // [out, rank, 1, 1], carries the original bias
  int64_t rank = 0;
  double discarded_energy = 0.0;  // sum of dropped sigma^2
};
LowRankResult low_rank_decompose(const ConvSpec& conv, double energy_threshold);

}  // namespace practise
