// Small hand-built graphs shared across test suites.
#pragma once

#include "core/graph.hpp"

namespace practise::testing {

// conv1 -> bn -> relu -> conv4 (the canonical single-layer pruning shape):
// channels in_ch -> mid_ch -> out_ch, 3x3 kernels, random weights and BN
// statistics drawn from `seed`.
ModelGraph make_layer_net(int64_t in_ch, int64_t mid_ch, int64_t out_ch,
                          uint64_t seed, bool randomize_bn = true);

// Random BN spec (positive variances) for fold tests.
BNSpec random_bn(int64_t channels, uint64_t seed);

// Random conv spec.
ConvSpec random_conv(int64_t out_ch, int64_t in_ch, int64_t k, uint64_t seed,
                     bool bias = false, int stride = 1, int pad = 0,
                     int groups = 1);

}  // namespace practise::testing
