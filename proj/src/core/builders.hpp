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

#include "core/graph.hpp"

namespace practise {

// Architecture zoo. Supported (name, variant) pairs:
//   resnet34     imagenet
//   resnet50     imagenet
//   vgg16        imagenet | cifar
//   mobilenetv2  imagenet
//   resnet56     cifar
// Weights are fan-in-scaled uniform, deterministic in (name, variant, seed).
ModelGraph build_architecture(const std::string& name,
                              const std::string& variant, uint64_t seed = 0);

// Small residual net for desk-scale experiments: stem plus `blocks_per_stage`
// basic blocks in three stages of the given widths, 32x32 inputs.
ModelGraph build_toy_resnet(int blocks_per_stage, int width0, int classes,
                            uint64_t seed);

// Deterministic fan-in-scaled uniform init, bound sqrt(6 / fan_in). The
// stream is derived from (seed, tag) so it does not depend on build order.
Tensor init_uniform_fan_in(std::vector<int64_t> shape, int64_t fan_in,
                           uint64_t seed, const std::string& tag);

}  // namespace practise
