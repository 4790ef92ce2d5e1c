#include "doctest.h"

#include <numeric>

#include "core/builders.hpp"
#include "core/errors.hpp"
#include "core/exec.hpp"
#include "core/rng.hpp"
#include "core/surgery.hpp"
#include "support/toys.hpp"

using namespace practise;
using namespace practise::testing;

TEST_CASE("resnet34 block drops reproduce the reference costs") {
  ModelGraph g = build_architecture("resnet34", "imagenet");
  drop_block(g, {1, 2, BlockRole::Inner});
  CostReport a = count_cost(g);
  CHECK(a.params == 21723688ull);
  CHECK(a.macs == 3432558784ull);
  drop_block(g, {2, 2, BlockRole::Inner});
  drop_block(g, {3, 2, BlockRole::Inner});
  CostReport c = count_cost(g);
  CHECK(c.params == 20247592ull);
  CHECK(c.macs == 2970136000ull);
  CHECK(g.validate().empty());
}

TEST_CASE("resnet50 and mobilenetv2 drops reproduce the reference costs") {
  ModelGraph r50 = build_architecture("resnet50", "imagenet");
  drop_block(r50, {1, 2, BlockRole::Inner});
  CHECK(count_cost(r50).params == 25486632ull);
  CHECK(count_cost(r50).macs == 3870844480ull);

  ModelGraph m = build_architecture("mobilenetv2", "imagenet");
  drop_block(m, {3, 2, BlockRole::Inner});
  CHECK(count_cost(m).params == 3490024ull);
  drop_block(m, {4, 2, BlockRole::Inner});
  CHECK(count_cost(m).params == 3435752ull);
  drop_block(m, {5, 2, BlockRole::Inner});
  CHECK(count_cost(m).params == 3317480ull);
  drop_block(m, {6, 2, BlockRole::Inner});
  CHECK(count_cost(m).params == 2997480ull);
  CHECK(count_cost(m).macs == 241318784ull);
  CHECK(m.validate().empty());
}

TEST_CASE("dropping a first block is rejected") {
  ModelGraph g = build_architecture("resnet34", "imagenet");
  CHECK_THROWS_AS(drop_block(g, {1, 1, BlockRole::First}), Error);
  CHECK_THROWS_AS(drop_block(g, {2, 1, BlockRole::First}), Error);
  CHECK_THROWS_AS(drop_block(g, {9, 2, BlockRole::Inner}), Error);
}

TEST_CASE("vgg drop removes one conv and inserts one adaptor with one tap") {
  ModelGraph g = build_architecture("vgg16", "imagenet");
  uint64_t before = count_cost(g).params;
  drop_block(g, {2, 2, BlockRole::Inner});
  CHECK(before - count_cost(g).params == 147840ull);  // conv + bias + bn
  auto result = insert_block_adaptors(g, {2, 2, BlockRole::Inner});
  CHECK(result.adaptors.size() == 1);
  CHECK(result.taps.size() == 1);
  CHECK(g.validate().empty());
}

TEST_CASE("dropped resnet block with identity adaptors equals vanilla drop") {
  ModelGraph teacher = build_toy_resnet(3, 8, 10, 60);
  ModelGraph vanilla = teacher;
  drop_block(vanilla, {1, 2, BlockRole::Inner});
  ModelGraph student = vanilla;
  auto result = insert_block_adaptors(student, {1, 2, BlockRole::Inner});
  // Remaining stage-1 blocks (old 1.3 now 1.2) plus stage-2 conv1 and down.
  CHECK(result.adaptors.size() == 3);
  CHECK(student.validate().empty());

  Rng rng(61);
  Tensor x = Tensor::normal({2, 3, 32, 32}, rng);
  auto a = forward_eval(vanilla, x);
  auto b = forward_eval(student, x);
  CHECK(max_abs_diff(a.logits, b.logits) < 1e-6f);

  SUBCASE("random adaptors merge exactly") {
    Rng wr(62);
    for (const auto& ad : result.adaptors) {
      Tensor& w = student.node(ad.id).conv().weight;
      w = Tensor::uniform(w.shape, -0.6f, 0.6f, wr);
    }
    auto before = forward_eval(student, x);
    merge_all_adaptors(student, result.adaptors);
    auto after = forward_eval(student, x);
    CHECK(max_abs_diff(before.logits, after.logits) < 1e-4f);
    CHECK(student.validate().empty());
  }
}

TEST_CASE("resnet34 drop 1.2 adapts block 1.3 and the stage-2 entries") {
  ModelGraph g = build_architecture("resnet34", "imagenet");
  drop_block(g, {1, 2, BlockRole::Inner});
  auto result = insert_block_adaptors(g, {1, 2, BlockRole::Inner});
  REQUIRE(result.adaptors.size() == 3);
  std::set<std::string> targets;
  for (const auto& a : result.adaptors) {
    REQUIRE(a.merge_targets.size() == 1);
    targets.insert(a.merge_targets[0]);
  }
  CHECK(targets ==
        std::set<std::string>{"s1b3_conv1", "s2b1_conv1", "s2b1_down"});
  CHECK(result.taps.size() == 3);
  CHECK(g.validate().empty());
}

TEST_CASE("mobilenetv2 drop wires adaptors onto the expand convs") {
  ModelGraph g = build_architecture("mobilenetv2", "imagenet");
  drop_block(g, {3, 2, BlockRole::Inner});
  auto result = insert_block_adaptors(g, {3, 2, BlockRole::Inner});
  // Remaining inner block of stage 3 plus stage 4's first block; the
  // stride-2 blocks have no shortcut conv, so two adaptors total.
  CHECK(result.adaptors.size() == 2);
  CHECK(result.taps.size() == 2);
  for (const auto& a : result.adaptors) {
    CHECK(a.merge_targets.size() == 1);
    CHECK(a.merge_targets[0].find("expand") != std::string::npos);
  }
  CHECK(g.validate().empty());
}

TEST_CASE("select_keep_channels follows the l1 rule with low-index ties") {
  ConvSpec conv;
  conv.weight = Tensor({3, 1, 1, 1}, std::vector<float>{3.0f, 1.0f, 2.0f});
  CHECK(select_keep_channels(conv, 2) == std::vector<int64_t>{0, 2});
  ConvSpec ties;
  ties.weight = Tensor({3, 1, 1, 1}, std::vector<float>{1.0f, 1.0f, 1.0f});
  CHECK(select_keep_channels(ties, 2) == std::vector<int64_t>{0, 1});
  CHECK_THROWS_AS(select_keep_channels(ties, 3), Error);
  CHECK_THROWS_AS(select_keep_channels(ties, 0), Error);
}

TEST_CASE("prune_channels keep-all is the identity") {
  ModelGraph g = make_layer_net(3, 12, 5, 63);
  ModelGraph original = g;
  std::vector<int64_t> all(12);
  std::iota(all.begin(), all.end(), 0);
  prune_channels(g, "conv1", all);
  Rng rng(64);
  Tensor x = Tensor::normal({2, 3, 8, 8}, rng);
  CHECK(bitwise_equal(forward_eval(original, x).logits,
                      forward_eval(g, x).logits));
}

TEST_CASE("prune_channels shape contract") {
  ModelGraph g = make_layer_net(3, 64, 8, 65);
  auto keep = select_keep_channels(g.node("conv1").conv(), 32);
  prune_channels(g, "conv1", keep);
  CHECK(g.node("conv1").conv().out_channels() == 32);
  CHECK(g.node("conv1").conv().weight.dim(1) == 3);
  CHECK(g.node("conv4").conv().in_channels() == 32);
  CHECK(g.node("bn1").bn().channels() == 32);
  CHECK(g.validate().empty());
}

TEST_CASE("pruning one branch of an add is rejected") {
  ModelGraph g = build_toy_resnet(2, 8, 10, 66);
  // s1b1_conv2 feeds bn2 -> add: pruning it would desync the shortcut.
  CHECK_THROWS_AS(prune_channels(g, "s1b1_conv2", {0, 1, 2}), Error);
  CHECK_THROWS_AS(prune_channels(g, "s1b1_conv1", {99}), Error);
}
