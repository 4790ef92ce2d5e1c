#include "doctest.h"

#include <cmath>

#include "core/errors.hpp"
#include "core/exec.hpp"
#include "core/rng.hpp"
#include "core/surgery.hpp"
#include "support/reference.hpp"
#include "support/toys.hpp"

using namespace practise;
using namespace practise::testing;

namespace {

Tensor identity_u(int64_t c) {
  Tensor t({c, c, 1, 1}, 0.0f);
  for (int64_t i = 0; i < c; ++i) t.data[i * c + i] = 1.0f;
  return t;
}

Tensor random_mask(const std::vector<int64_t>& shape, double keep_fraction,
                   Rng& rng) {
  Tensor m(shape);
  for (float& v : m.data) v = rng.next_double() < keep_fraction ? 1.0f : 0.0f;
  return m;
}

}  // namespace

TEST_CASE("identity adaptor composition is the masked weight") {
  Rng rng(70);
  Tensor w = Tensor::uniform({4, 3, 3, 3}, -1.0f, 1.0f, rng);
  Tensor m = random_mask({4, 3, 3, 3}, 0.5, rng);
  Tensor out = compose_and_mask(w, identity_u(3), m);
  for (int64_t i = 0; i < w.numel(); ++i)
    CHECK(out.data[i] == w.data[i] * m.data[i]);
}

TEST_CASE("all-ones mask gives the plain composition") {
  Rng rng(71);
  Tensor w = Tensor::uniform({4, 3, 3, 3}, -1.0f, 1.0f, rng);
  Tensor u = Tensor::uniform({3, 3, 1, 1}, -1.0f, 1.0f, rng);
  Tensor ones({4, 3, 3, 3}, 1.0f);
  Tensor composed = compose_and_mask(w, u, ones);
  // Oracle: the composition is the pre-merge of u into w.
  ConvSpec spec;
  spec.weight = w;
  ConvSpec merged = merge_adjacent_linear(u, spec, Adaptor::Side::Pre);
  CHECK(max_abs_diff(composed, merged.weight) < 1e-6f);
}

TEST_CASE("mask zero-set is preserved exactly at 90 percent sparsity") {
  Rng rng(72);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor w = Tensor::uniform({6, 5, 3, 3}, -1.0f, 1.0f, rng);
    Tensor u = Tensor::uniform({5, 5, 1, 1}, -1.0f, 1.0f, rng);
    Tensor m = random_mask({6, 5, 3, 3}, 0.1, rng);
    Tensor out = compose_and_mask(w, u, m);
    for (int64_t i = 0; i < out.numel(); ++i)
      if (m.data[i] == 0.0f) CHECK(out.data[i] == 0.0f);
  }
}

TEST_CASE("compose_and_mask rejects mismatched shapes and non-binary masks") {
  Rng rng(73);
  Tensor w = Tensor::uniform({4, 3, 3, 3}, -1.0f, 1.0f, rng);
  Tensor u = Tensor::uniform({3, 3, 1, 1}, -1.0f, 1.0f, rng);
  CHECK_THROWS_AS(compose_and_mask(w, u, Tensor({4, 3, 3, 2}, 1.0f)), Error);
  Tensor bad({4, 3, 3, 3}, 0.5f);
  CHECK_THROWS_AS(compose_and_mask(w, u, bad), Error);
  Tensor u_bad = Tensor::uniform({7, 3, 1, 1}, -1.0f, 1.0f, rng);
  CHECK_THROWS_AS(compose_and_mask(w, u_bad, Tensor({4, 3, 3, 3}, 1.0f)),
                  Error);
}

TEST_CASE("rank-1 weight decomposes to rank 1 exactly") {
  // W[o,c,kh,kw] = a[o] * b[c,kh,kw] has rank 1.
  Rng rng(74);
  Tensor a = Tensor::uniform({6}, 0.5f, 1.5f, rng);
  Tensor b = Tensor::uniform({4 * 3 * 3}, -1.0f, 1.0f, rng);
  ConvSpec conv;
  conv.weight = Tensor({6, 4, 3, 3});
  conv.pad_h = conv.pad_w = 1;
  for (int64_t o = 0; o < 6; ++o)
    for (int64_t j = 0; j < 36; ++j)
      conv.weight.data[o * 36 + j] = a.data[o] * b.data[j];

  LowRankResult r = low_rank_decompose(conv, 0.05);
  CHECK(r.rank == 1);
  CHECK(r.discarded_energy < 1e-8);

  Tensor x = Tensor::normal({2, 4, 6, 6}, rng);
  Tensor direct = kernels::conv2d(x, conv);
  Tensor mid = kernels::conv2d(x, r.spatial);
  Tensor seq = kernels::conv2d(mid, r.pointwise);
  CHECK(max_abs_diff(direct, seq) < 1e-4f);
}

TEST_CASE("full energy threshold reproduces the conv to 1e-4") {
  ConvSpec conv = random_conv(16, 8, 3, 75, true, 1, 1);
  LowRankResult r = low_rank_decompose(conv, 1.0);
  CHECK(r.rank == 16);  // min(out, in*k*k)
  Rng rng(76);
  Tensor x = Tensor::normal({2, 8, 7, 7}, rng);
  Tensor direct = kernels::conv2d(x, conv);
  Tensor seq = kernels::conv2d(kernels::conv2d(x, r.spatial), r.pointwise);
  CHECK(max_abs_diff(direct, seq) < 1e-4f);
}

TEST_CASE("reconstruction error equals the discarded tail energy") {
  ConvSpec conv = random_conv(16, 8, 3, 77, false, 1, 1);
  LowRankResult r = low_rank_decompose(conv, 0.4);
  CHECK(r.rank >= 1);
  CHECK(r.rank < 16);

  // Reconstruct W' = pointwise x spatial and compare squared Frobenius
  // error against the SVD tail, both in double.
  const int64_t o = 16, k = 8 * 3 * 3, rank = r.rank;
  double err = 0.0;
  for (int64_t i = 0; i < o; ++i)
    for (int64_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < rank; ++t)
        acc += static_cast<double>(r.pointwise.weight.data[i * rank + t]) *
               r.spatial.weight.data[t * k + j];
      double d = acc - conv.weight.data[i * k + j];
      err += d * d;
    }
  CHECK(err == doctest::Approx(r.discarded_energy).epsilon(1e-4));
}

TEST_CASE("energy threshold bounds are enforced") {
  ConvSpec conv = random_conv(4, 2, 3, 78);
  CHECK_THROWS_AS(low_rank_decompose(conv, 0.0), Error);
  CHECK_THROWS_AS(low_rank_decompose(conv, 1.5), Error);
  ConvSpec grouped = random_conv(4, 4, 3, 79, false, 1, 1, 2);
  CHECK_THROWS_AS(low_rank_decompose(grouped, 0.5), Error);
}
