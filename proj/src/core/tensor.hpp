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

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace practise {

class Rng;

// Dense row-major float32 tensor. Shape entries are positive; an empty shape
// is only used for default-constructed placeholders.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s);
  Tensor(std::vector<int64_t> s, float fill);
  Tensor(std::vector<int64_t> s, std::vector<float> values);

  int64_t numel() const;
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }
  bool empty() const { return data.empty(); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  float& at(std::initializer_list<int64_t> idx);
  float at(std::initializer_list<int64_t> idx) const;

  void fill(float v);
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s), 0.0f); }
  static Tensor ones(std::vector<int64_t> s) { return Tensor(std::move(s), 1.0f); }
  // i.i.d. U(lo, hi)
  static Tensor uniform(std::vector<int64_t> s, float lo, float hi, Rng& rng);
  // i.i.d. N(0, 1)
  static Tensor normal(std::vector<int64_t> s, Rng& rng);
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// max |a - b| over all elements; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace practise
