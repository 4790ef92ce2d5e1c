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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "core/graph.hpp"

namespace practise {

// Declarative description of one compression scheme.
struct CompressionPlan {
  enum class Scheme { BlockDrop, FilterLevel, Unstructured, LowRank };
  Scheme scheme = Scheme::BlockDrop;
  std::vector<std::pair<int, int>> blocks;      // (stage, block)
  std::map<std::string, int64_t> keep_counts;   // producer conv -> N
  std::map<std::string, Tensor> masks;          // conv id -> 0/1 mask
  std::string mask_dir;                         // where masks are persisted
  double energy_threshold = 0.4;
};

const char* scheme_name(CompressionPlan::Scheme s);

// Text form, `key = value` per line:
//   scheme = block_drop | filter_level | unstructured | low_rank
//   blocks = 1.2, 2.2
//   keep_counts = conv1:32, s1b2_conv1:16
//   masks = <dir>
//   energy_threshold = 0.4
CompressionPlan plan_from_text(const std::string& text);
std::string plan_to_text(const CompressionPlan& plan);

// Resolves plan.mask_dir into plan.masks / writes plan.masks out.
void load_plan_masks(CompressionPlan& plan,
                     const std::filesystem::path& base);
void save_plan_masks(const CompressionPlan& plan,
                     const std::filesystem::path& dir);

// Scheme-specific invariants against a concrete graph; throws on violation.
// block_drop: at most one block per stage, every block inner/stride-1.
void validate_plan(const CompressionPlan& plan, const ModelGraph& teacher);

}  // namespace practise
