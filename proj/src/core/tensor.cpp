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

#include "core/tensor.hpp"

#include <cmath>
#include <cstring>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace practise {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw_internal("tensor shape entries must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
}

Tensor::Tensor(std::vector<int64_t> s, float fill) : Tensor(std::move(s)) {
  this->fill(fill);
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<float> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw_internal("tensor shape does not match value count");
}

int64_t Tensor::numel() const {
  return static_cast<int64_t>(data.size());
}

static size_t flat_index(const std::vector<int64_t>& shape,
                         std::initializer_list<int64_t> idx) {
  if (idx.size() != shape.size()) throw_internal("tensor index rank mismatch");
  size_t flat = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= shape[i]) throw_internal("tensor index out of range");
    flat = flat * static_cast<size_t>(shape[i]) + static_cast<size_t>(v);
    ++i;
  }
  return flat;
}

float& Tensor::at(std::initializer_list<int64_t> idx) {
  return data[flat_index(shape, idx)];
}

float Tensor::at(std::initializer_list<int64_t> idx) const {
  return data[flat_index(shape, idx)];
}

void Tensor::fill(float v) {
  std::fill(data.begin(), data.end(), v);
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::uniform(std::vector<int64_t> s, float lo, float hi, Rng& rng) {
  Tensor t(std::move(s));
  for (float& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(std::vector<int64_t> s, Rng& rng) {
  Tensor t(std::move(s));
  for (float& v : t.data) v = rng.next_normal();
  return t;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw_internal("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(float)) == 0;
}

}  // namespace practise
