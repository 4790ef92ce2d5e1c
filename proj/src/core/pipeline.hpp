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
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/recovery.hpp"
#include "core/tinyset.hpp"

namespace practise {

// Shared builders used by the pipeline and the CLI surfaces.
ModelGraph model_from_config(const Config& cfg);
TinySet tinyset_from_config(const Config& cfg, const ModelGraph& model);
CompressionPlan plan_from_config(const Config& cfg);
MimicConfig mimic_from_config(const Config& cfg);
FinetuneConfig finetune_from_config(const Config& cfg);

struct PipelineResult {
  std::string manifest_text;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint_dir;
};

// Config-driven end-to-end run: build/load -> plan -> recovery -> optional
// finetune -> evaluate -> cost -> optional latency; writes the run manifest
// and the compressed checkpoint under out.dir. The same tiny set feeds both
// recovery stages.
PipelineResult run_pipeline(const Config& cfg);
PipelineResult run_pipeline(const std::filesystem::path& config_path,
                            const std::vector<std::string>& overrides);

}  // namespace practise
