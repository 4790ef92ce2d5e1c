#include "doctest.h"

#include <algorithm>

#include "core/builders.hpp"
#include "core/errors.hpp"
#include "core/exec.hpp"
#include "core/graph.hpp"
#include "core/rng.hpp"

using namespace practise;

namespace {

ModelGraph chain_net(bool with_bias) {
  // conv(4->4,3x3) -> relu -> conv(4->2,1x1) -> gap -> flatten -> fc(2->3)
  ModelGraph g;
  g.input = {4, 6, 6};
  Rng rng(9);
  Node c1;
  c1.id = "c1";
  c1.kind = NodeKind::Conv;
  ConvSpec s1;
  s1.weight = Tensor::uniform({4, 4, 3, 3}, -0.3f, 0.3f, rng);
  if (with_bias) s1.bias = Tensor::uniform({4}, -0.1f, 0.1f, rng);
  s1.pad_h = s1.pad_w = 1;
  c1.params = std::move(s1);
  g.add_node(std::move(c1), {});
  Node r;
  r.id = "r1";
  r.kind = NodeKind::ReLU;
  g.add_node(std::move(r), {"c1"});
  Node c2;
  c2.id = "c2";
  c2.kind = NodeKind::Conv;
  ConvSpec s2;
  s2.weight = Tensor::uniform({2, 4, 1, 1}, -0.4f, 0.4f, rng);
  c2.params = std::move(s2);
  g.add_node(std::move(c2), {"r1"});
  Node gap;
  gap.id = "gap";
  gap.kind = NodeKind::GlobalAvgPool;
  g.add_node(std::move(gap), {"c2"});
  Node fl;
  fl.id = "flatten";
  fl.kind = NodeKind::Flatten;
  g.add_node(std::move(fl), {"gap"});
  Node fc;
  fc.id = "fc";
  fc.kind = NodeKind::FC;
  FCSpec fs;
  fs.weight = Tensor::uniform({3, 2}, -0.5f, 0.5f, rng);
  fc.params = std::move(fs);
  g.add_node(std::move(fc), {"flatten"});
  return g;
}

}  // namespace

TEST_CASE("validate flags add nodes with mismatched inputs") {
  ModelGraph g;
  g.input = {3, 8, 8};
  Node a;
  a.id = "a";
  a.kind = NodeKind::Conv;
  ConvSpec sa;
  sa.weight = Tensor({64, 3, 1, 1});
  a.params = std::move(sa);
  g.add_node(std::move(a), {});
  Node b;
  b.id = "b";
  b.kind = NodeKind::Conv;
  ConvSpec sb;
  sb.weight = Tensor({128, 64, 1, 1});
  b.params = std::move(sb);
  g.add_node(std::move(b), {"a"});
  Node add;
  add.id = "bad_add";
  add.kind = NodeKind::Add;
  g.add_node(std::move(add), {"a", "b"});
  auto v = g.validate();
  REQUIRE(!v.empty());
  bool mentions_add = std::any_of(v.begin(), v.end(), [](const Violation& x) {
    return x.detail.find("bad_add") != std::string::npos ||
           x.node == "bad_add";
  });
  CHECK(mentions_add);
}

TEST_CASE("validate flags cycles") {
  ModelGraph g;
  g.input = {1, 2, 2};
  Node a;
  a.id = "a";
  a.kind = NodeKind::ReLU;
  g.add_node(std::move(a), {});
  Node b;
  b.id = "b";
  b.kind = NodeKind::ReLU;
  g.add_node(std::move(b), {"a"});
  Node c;
  c.id = "c";
  c.kind = NodeKind::ReLU;
  g.add_node(std::move(c), {"b"});
  g.replace_pred("b", "a", "c");  // b <- c <- b
  auto v = g.validate();
  bool cyclic = std::any_of(v.begin(), v.end(), [](const Violation& x) {
    return x.rule == "acyclic";
  });
  CHECK(cyclic);
  CHECK_THROWS_AS(g.topo_order(), Error);
}

TEST_CASE("freshly built graphs validate clean") {
  CHECK(build_architecture("resnet34", "imagenet").validate().empty());
}

TEST_CASE("tag role must match block index") {
  ModelGraph g = chain_net(false);
  g.block_tags["c1"] = BlockTag{1, 2, BlockRole::First};
  auto v = g.validate();
  bool found = std::any_of(v.begin(), v.end(), [](const Violation& x) {
    return x.rule == "tag-role";
  });
  CHECK(found);
}

TEST_CASE("all-zero batch through a bias-free relu net gives zero logits") {
  ModelGraph g = chain_net(false);
  Tensor batch({2, 4, 6, 6}, 0.0f);
  auto out = forward_eval(g, batch);
  for (float v : out.logits.data) CHECK(v == 0.0f);
}

TEST_CASE("eval forward is bitwise deterministic") {
  ModelGraph g = chain_net(true);
  Rng rng(4);
  Tensor batch = Tensor::normal({3, 4, 6, 6}, rng);
  auto a = forward_eval(g, batch);
  auto b = forward_eval(g, batch);
  CHECK(bitwise_equal(a.logits, b.logits));
}

TEST_CASE("taps return the declared activation shapes") {
  ModelGraph g = chain_net(true);
  Rng rng(4);
  Tensor batch = Tensor::normal({2, 4, 6, 6}, rng);
  auto out = forward_eval(g, batch, {"c1", "c2"});
  CHECK(out.taps.at("c1").shape == std::vector<int64_t>{2, 4, 6, 6});
  CHECK(out.taps.at("c2").shape == std::vector<int64_t>{2, 2, 6, 6});
}

TEST_CASE("forward rejects bad batches and unknown taps") {
  ModelGraph g = chain_net(true);
  Tensor wrong({2, 3, 6, 6}, 0.0f);
  CHECK_THROWS_AS(forward_eval(g, wrong), Error);
  Tensor ok({1, 4, 6, 6}, 0.0f);
  CHECK_THROWS_AS(forward_eval(g, ok, {"nope"}), Error);
}

TEST_CASE("train-mode bn uses batch stats and reports updates") {
  // conv -> bn -> relu chain; check running stats move toward batch stats.
  ModelGraph g;
  g.input = {2, 4, 4};
  Node c;
  c.id = "c";
  c.kind = NodeKind::Conv;
  ConvSpec cs;
  Rng rng(21);
  cs.weight = Tensor::uniform({2, 2, 1, 1}, -1.0f, 1.0f, rng);
  c.params = std::move(cs);
  g.add_node(std::move(c), {});
  Node bn;
  bn.id = "bn";
  bn.kind = NodeKind::BN;
  BNSpec bs;
  bs.gamma = Tensor::ones({2});
  bs.beta = Tensor::zeros({2});
  bs.running_mean = Tensor::zeros({2});
  bs.running_var = Tensor::ones({2});
  bn.params = std::move(bs);
  g.add_node(std::move(bn), {"c"});

  Tensor batch = Tensor::normal({5, 2, 4, 4}, rng);
  Executor ex;
  ForwardOptions opts;
  opts.batch_stat_bn = {"bn"};
  BNBatchStats stats;
  auto out = ex.forward(g, batch, opts, &stats);
  REQUIRE(stats.stats.count("bn"));
  CHECK(stats.stats.at("bn").count == 5 * 16);

  // Batch-stat output is normalized: per-channel mean ~0, var ~1.
  const Tensor& y = out.logits;
  for (int ch = 0; ch < 2; ++ch) {
    double sum = 0.0;
    int64_t hw = 16, n = 5;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < hw; ++j) sum += y.data[(i * 2 + ch) * hw + j];
    CHECK(std::abs(sum / (n * hw)) < 1e-5);
  }

  Tensor before = g.node("bn").bn().running_mean;
  apply_bn_updates(g, stats, 0.1f);
  Tensor after = g.node("bn").bn().running_mean;
  bool moved = !bitwise_equal(before, after);
  CHECK(moved);
}
