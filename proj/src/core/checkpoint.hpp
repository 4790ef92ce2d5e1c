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

#include "core/graph.hpp"

namespace practise {

// Directory layout: `manifest.txt` describes nodes, edges, shapes and tags;
// every tensor is a raw little-endian float32 blob named `<node>.<slot>.bin`.
// The round trip is bit-exact.
void save_checkpoint(const ModelGraph& graph, const std::filesystem::path& dir);
ModelGraph load_checkpoint(const std::filesystem::path& dir);

inline constexpr int kCheckpointVersion = 1;

}  // namespace practise
