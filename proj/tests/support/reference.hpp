// Test-only oracles, independent of the library's execution path: direct
// double-precision convolution and a naive graph interpreter. Used to freeze
// expected values for merges, folds and gradients.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "core/graph.hpp"

namespace practise::testing {

// Direct 7-loop convolution in double precision, [N,C,H,W].
std::vector<double> ref_conv2d(const std::vector<double>& input, int64_t n,
                               int64_t c, int64_t h, int64_t w,
                               const ConvSpec& spec, int64_t* oh, int64_t* ow);

std::vector<double> to_double(const Tensor& t);
Tensor to_float(const std::vector<double>& v, std::vector<int64_t> shape);

// Naive double-precision evaluation of a whole graph; `batch_stat_bn` mirrors
// the executor's train-mode BN set (no running-stat updates).
struct RefResult {
  std::vector<double> logits;
  std::vector<int64_t> logits_shape;
  std::map<std::string, std::vector<double>> taps;
};
RefResult ref_forward(const ModelGraph& g, const Tensor& batch,
                      const std::vector<std::string>& taps,
                      const std::set<std::string>& batch_stat_bn = {});

// Mean over every element of sum_taps (a - b)^2, in double precision.
double ref_tap_mse(const RefResult& a, const RefResult& b);

}  // namespace practise::testing
