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
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace practise {

struct Recipe {
  enum class Mode { KShot, RandomN, Synthetic };
  std::string source;
  Mode mode = Mode::RandomN;
  int64_t k_or_n = 0;
  uint64_t seed = 0;
};

const char* recipe_mode_name(Recipe::Mode mode);
std::optional<Recipe::Mode> recipe_mode_from_name(const std::string& name);

// Ordered image collection with optional labels and the recipe that produced
// it. Immutable after construction.
struct TinySet {
  std::vector<Tensor> images;  // each [C,H,W], identical shapes
  std::optional<std::vector<int32_t>> labels;
  Recipe recipe;

  size_t size() const { return images.size(); }
  bool labeled() const { return labels.has_value(); }
};

// A full labeled collection that tiny sets are drawn from.
struct ImageSource {
  std::string name;
  std::vector<Tensor> images;
  std::vector<int32_t> labels;
  int64_t classes() const;
};

// KShot: k images per class, classes visited in ascending label order.
// RandomN: n images uniformly without replacement.
// Deterministic in (source, mode, k_or_n, seed).
TinySet sample_tinyset(const ImageSource& source, Recipe::Mode mode,
                       int64_t k_or_n, uint64_t seed);

// count i.i.d. standard-normal images, unlabeled.
TinySet synth_gaussian(int64_t count, int64_t channels, int64_t height,
                       int64_t width, uint64_t seed);

// Procedural 10-class 32x32 benchmark source (filled/outlined shapes,
// stripes, checker, diagonals) with per-sample jitter, color and noise.
// Balanced labels, deterministic in (count, seed).
ImageSource synth_patterns(int64_t count, uint64_t seed);

enum class AugmentPolicy { None, ImageNet, Cifar };

const char* augment_policy_name(AugmentPolicy p);
std::optional<AugmentPolicy> augment_policy_from_name(const std::string& name);

// ImageNet: random resized crop to 224 plus horizontal flip.
// Cifar: 4-pixel reflection pad, random 32-crop, horizontal flip.
// Deterministic in (batch, policy, seed).
Tensor augment_batch(const Tensor& batch, AugmentPolicy policy, uint64_t seed);

// Checkpoint-style export: recipe.txt + images.bin (+ labels.bin).
void save_tinyset(const TinySet& set, const std::filesystem::path& dir);
TinySet load_tinyset(const std::filesystem::path& dir);

// Directory-of-class-folders ingestion; supports binary PPM/PGM and
// uncompressed 24/32-bit BMP rasters, decoded to [3,H,W] reals in [0,1] and
// channel-normalized with the given statistics.
ImageSource load_image_folder(const std::filesystem::path& root,
                              const std::vector<float>& mean = {},
                              const std::vector<float>& stddev = {});

// [N,C,H,W] batch from the given sample indices.
Tensor stack_batch(const TinySet& set, const std::vector<int64_t>& indices);

}  // namespace practise
