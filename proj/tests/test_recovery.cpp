#include "doctest.h"

#include <cmath>

#include "core/builders.hpp"
#include "core/errors.hpp"
#include "core/exec.hpp"
#include "core/recovery.hpp"
#include "core/rng.hpp"
#include "core/surgery.hpp"
#include "core/tinyset.hpp"
#include "support/reference.hpp"
#include "support/toys.hpp"

using namespace practise;
using namespace practise::testing;

namespace {

TinySet small_set(int64_t count, int64_t c, int64_t h, int64_t w,
                  uint64_t seed) {
  return synth_gaussian(count, c, h, w, seed);
}

bool graphs_tensor_equal(const ModelGraph& a, const ModelGraph& b) {
  if (a.topo_order() != b.topo_order()) return false;
  for (const auto& id : a.order()) {
    const Node& na = a.node(id);
    const Node& nb = b.node(id);
    if (na.kind != nb.kind) return false;
    if (na.kind == NodeKind::Conv &&
        !bitwise_equal(na.conv().weight, nb.conv().weight))
      return false;
    if (na.kind == NodeKind::FC &&
        !bitwise_equal(na.fc().weight, nb.fc().weight))
      return false;
    if (na.kind == NodeKind::BN &&
        (!bitwise_equal(na.bn().running_mean, nb.bn().running_mean) ||
         !bitwise_equal(na.bn().gamma, nb.bn().gamma)))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zero-loss fixed point terminates with adaptors unchanged") {
  ModelGraph teacher = make_layer_net(3, 8, 6, 300);
  ModelGraph student = teacher;
  auto ins = insert_channel_adaptors(student, "conv1", AdaptorInit::Identity, {});

  MimicJob job;
  job.teacher = &teacher;
  job.student = &student;
  for (const auto& a : ins.adaptors) job.trainable.push_back(a.id);
  job.taps = ins.taps;
  job.site_bn = ins.site_bn;

  Tensor pre = student.node(ins.adaptors[0].id).conv().weight;
  TinySet data = small_set(6, 3, 8, 8, 301);
  MimicConfig cfg;
  cfg.max_epochs = 40;
  cfg.patience = 10;
  auto result = train_adaptors(job, data, cfg);

  CHECK(result.initial_loss == 0.0);
  CHECK(result.final_loss == 0.0);
  CHECK(result.epochs_run == 10);  // patience epochs with no improvement
  CHECK(bitwise_equal(student.node(ins.adaptors[0].id).conv().weight, pre));
}

TEST_CASE("block-drop identity init starts at the vanilla dropped tap mse") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 302);
  ModelGraph vanilla = teacher;
  drop_block(vanilla, {2, 2, BlockRole::Inner});
  ModelGraph student = vanilla;
  auto ins = insert_block_adaptors(student, {2, 2, BlockRole::Inner});

  MimicJob job;
  job.teacher = &teacher;
  job.student = &student;
  for (const auto& a : ins.adaptors) job.trainable.push_back(a.id);
  job.taps = ins.taps;

  TinySet data = small_set(5, 3, 32, 32, 303);
  MimicConfig cfg;
  cfg.max_epochs = 0;  // record the initial loss only
  auto result = train_adaptors(job, data, cfg);

  // Oracle: tap MSE between the teacher and the vanilla dropped model,
  // averaged over the set, in double precision.
  std::vector<std::string> tap_ids;
  for (const auto& [t, s] : job.taps) tap_ids.push_back(t);
  double expect = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    Tensor x = stack_batch(data, {static_cast<int64_t>(i)});
    auto t = ref_forward(teacher, x, tap_ids);
    auto v = ref_forward(vanilla, x, tap_ids);
    expect += ref_tap_mse(t, v);
  }
  expect /= data.size();
  CHECK(result.initial_loss ==
        doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("mimic gradients match central finite differences") {
  // 4-channel toy layer with a channel-select site; the reference loss is
  // evaluated with the double-precision interpreter.
  ModelGraph teacher = make_layer_net(3, 4, 4, 304);
  ModelGraph student = teacher;
  auto keep = std::vector<int64_t>{0, 2};
  auto ins =
      insert_channel_adaptors(student, "conv1", AdaptorInit::ChannelSelect, keep);

  Rng rng(305);
  Tensor x = Tensor::normal({3, 3, 8, 8}, rng);
  // Nudge the adaptors off the exact selection so gradients are generic.
  for (const auto& a : ins.adaptors) {
    Tensor& w = student.node(a.id).conv().weight;
    for (float& v : w.data) v += 0.05f * rng.next_normal();
  }

  const std::vector<std::string> taps = {"conv4"};
  const std::set<std::string> train_bn = {ins.site_bn.begin(),
                                          ins.site_bn.end()};

  // Teacher tap held fixed at its float value.
  auto t_out = forward_eval(teacher, x, taps);
  const Tensor t_tap = t_out.taps.at("conv4");

  auto ref_loss = [&](const ModelGraph& g) {
    auto r = ref_forward(g, x, taps, train_bn);
    const auto& s = r.taps.at("conv4");
    double acc = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      double d = s[i] - static_cast<double>(t_tap.data[i]);
      acc += d * d;
    }
    return acc / static_cast<double>(s.size());
  };

  // Engine gradients.
  Executor sex;
  ForwardOptions opts;
  opts.taps = taps;
  opts.keep_state = true;
  opts.batch_stat_bn = train_bn;
  auto sr = sex.forward(student, x, opts);
  const Tensor& s_tap = sr.taps.at("conv4");
  Tensor seed(s_tap.shape);
  for (int64_t i = 0; i < s_tap.numel(); ++i)
    seed.data[i] = 2.0f * (s_tap.data[i] - t_tap.data[i]) /
                   static_cast<float>(s_tap.numel());
  std::set<ParamKey> wanted;
  for (const auto& a : ins.adaptors) wanted.insert({a.id, ParamSlot::ConvWeight});
  std::map<ParamKey, Tensor> grads;
  sex.backward(student, {{"conv4", seed}}, wanted, grads);

  // Relative error at the gradient's scale (per-entry ratios are ill-posed
  // for near-zero entries under the fixed 1e-3 step).
  double fd_norm = 0.0, worst_abs = 0.0;
  for (const auto& a : ins.adaptors) {
    Tensor& w = student.node(a.id).conv().weight;
    const Tensor& g = grads.at({a.id, ParamSlot::ConvWeight});
    for (int64_t i = 0; i < w.numel(); ++i) {
      const float keep_value = w.data[i];
      const float hi = keep_value + 1e-3f;
      const float lo = keep_value - 1e-3f;
      w.data[i] = hi;
      const double lhi = ref_loss(student);
      w.data[i] = lo;
      const double llo = ref_loss(student);
      w.data[i] = keep_value;
      const double fd = (lhi - llo) / (static_cast<double>(hi) - lo);
      fd_norm = std::max(fd_norm, std::fabs(fd));
      worst_abs = std::max(worst_abs,
                           std::fabs(static_cast<double>(g.data[i]) - fd));
    }
  }
  CHECK(worst_abs / fd_norm < 1e-3);
}

TEST_CASE("training bookkeeping: min of the trace is the returned state") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 306);
  ModelGraph student = teacher;
  drop_block(student, {2, 2, BlockRole::Inner});
  auto ins = insert_block_adaptors(student, {2, 2, BlockRole::Inner});

  MimicJob job;
  job.teacher = &teacher;
  job.student = &student;
  for (const auto& a : ins.adaptors) job.trainable.push_back(a.id);
  job.taps = ins.taps;

  ImageSource src = synth_patterns(40, 307);
  TinySet data = sample_tinyset(src, Recipe::Mode::RandomN, 20, 308);
  MimicConfig cfg;
  cfg.learning_rate = 3e-3f;
  cfg.max_epochs = 12;
  cfg.patience = 4;
  cfg.seed = 309;
  auto result = train_adaptors(job, data, cfg);

  double mn = result.loss_trace[0];
  for (double v : result.loss_trace) mn = std::min(mn, v);
  CHECK(result.final_loss == doctest::Approx(mn));
  CHECK(result.final_loss <= result.initial_loss);
  CHECK(result.loss_trace.size() ==
        static_cast<size_t>(result.epochs_run) + 1);
  // Training should actually reduce the mimic loss on this job.
  CHECK(result.final_loss < result.initial_loss);

  SUBCASE("student with trained adaptors merges exactly") {
    Rng rng(310);
    Tensor x = Tensor::normal({2, 3, 32, 32}, rng);
    auto before = forward_eval(student, x);
    merge_all_adaptors(student, ins.adaptors);
    auto after = forward_eval(student, x);
    CHECK(max_abs_diff(before.logits, after.logits) < 1e-4f);
  }
}

TEST_CASE("run_practise runs one mimic job per dropped block") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 311);
  CompressionPlan plan;
  plan.scheme = CompressionPlan::Scheme::BlockDrop;
  plan.blocks = {{1, 2}, {2, 2}, {3, 2}};
  ImageSource src = synth_patterns(30, 312);
  TinySet data = sample_tinyset(src, Recipe::Mode::RandomN, 12, 313);
  MimicConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 314;

  PractiseReport report;
  ModelGraph out = run_practise(teacher, plan, data, cfg, 0, &report);
  CHECK(report.sites.size() == 3);
  CHECK(out.validate().empty());
  for (const auto& id : out.order()) {
    CHECK(id.find("_ad_") == std::string::npos);  // no adaptors remain
    CHECK(!id.ends_with("_ad"));
  }

  SUBCASE("parameter isolation: unmerged weights stay bitwise equal") {
    // Convs of untouched blocks must be identical to the teacher.
    CHECK(bitwise_equal(out.node("s1b1_conv1").conv().weight,
                        teacher.node("s1b1_conv1").conv().weight));
    CHECK(bitwise_equal(out.node("s1b1_conv2").conv().weight,
                        teacher.node("s1b1_conv2").conv().weight));
    // The adapted convs differ (they absorbed trained adaptors); the last
    // drop has only the classifier downstream, so the fc absorbed one too.
    CHECK(!bitwise_equal(out.node("s2b1_conv1").conv().weight,
                         teacher.node("s2b1_conv1").conv().weight));
    CHECK(!bitwise_equal(out.node("fc").fc().weight,
                         teacher.node("fc").fc().weight));
  }
}

TEST_CASE("run_practise with everything frozen is the vanilla pruned model") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 315);
  CompressionPlan plan;
  plan.scheme = CompressionPlan::Scheme::BlockDrop;
  plan.blocks = {{1, 2}, {3, 2}};
  TinySet data = small_set(4, 3, 32, 32, 316);
  MimicConfig cfg;

  ModelGraph out = run_practise(teacher, plan, data, cfg, 2, nullptr);
  ModelGraph vanilla = teacher;
  drop_block(vanilla, {1, 2, BlockRole::Inner});
  drop_block(vanilla, {3, 2, BlockRole::Inner});

  Rng rng(317);
  Tensor x = Tensor::normal({2, 3, 32, 32}, rng);
  auto a = forward_eval(vanilla, x);
  auto b = forward_eval(out, x);
  CHECK(max_abs_diff(a.logits, b.logits) < 1e-5f);
}

TEST_CASE("run_practise with an empty plan returns the teacher") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 318);
  CompressionPlan plan;
  plan.scheme = CompressionPlan::Scheme::BlockDrop;
  TinySet data = small_set(3, 3, 32, 32, 319);
  ModelGraph out = run_practise(teacher, plan, data, MimicConfig{}, 0, nullptr);
  CHECK(graphs_tensor_equal(teacher, out));
}

TEST_CASE("run_practise is deterministic in the seed") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 320);
  CompressionPlan plan;
  plan.scheme = CompressionPlan::Scheme::BlockDrop;
  plan.blocks = {{2, 2}};
  ImageSource src = synth_patterns(24, 321);
  TinySet data = sample_tinyset(src, Recipe::Mode::RandomN, 10, 322);
  MimicConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 323;
  ModelGraph a = run_practise(teacher, plan, data, cfg, 0, nullptr);
  ModelGraph b = run_practise(teacher, plan, data, cfg, 0, nullptr);
  CHECK(graphs_tensor_equal(a, b));
}

TEST_CASE("unstructured recovery trains the composition and keeps the mask") {
  ModelGraph teacher = make_layer_net(3, 6, 4, 324);
  CompressionPlan plan;
  plan.scheme = CompressionPlan::Scheme::Unstructured;
  Rng rng(325);
  Tensor mask(teacher.node("conv1").conv().weight.shape);
  for (float& v : mask.data) v = rng.next_double() < 0.1 ? 1.0f : 0.0f;
  plan.masks["conv1"] = mask;

  TinySet data = small_set(6, 3, 8, 8, 326);
  MimicConfig cfg;
  cfg.learning_rate = 1e-3f;
  cfg.max_epochs = 5;
  PractiseReport report;
  ModelGraph out = run_practise(teacher, plan, data, cfg, 0, &report);
  CHECK(report.sites.size() == 1);
  const Tensor& w = out.node("conv1").conv().weight;
  for (int64_t i = 0; i < w.numel(); ++i)
    if (mask.data[i] == 0.0f) CHECK(w.data[i] == 0.0f);
  // Training moved the surviving weights off the vanilla masked values.
  CHECK(report.sites[0].best_loss <= report.sites[0].initial_loss);
}

TEST_CASE("low-rank recovery decomposes convs and trains the 1x1 factor") {
  ModelGraph teacher = make_layer_net(3, 6, 4, 327);
  CompressionPlan plan;
  plan.scheme = CompressionPlan::Scheme::LowRank;
  plan.energy_threshold = 0.6;
  TinySet data = small_set(6, 3, 8, 8, 328);
  MimicConfig cfg;
  cfg.max_epochs = 3;
  PractiseReport report;
  ModelGraph out = run_practise(teacher, plan, data, cfg, 0, &report);
  CHECK(out.validate().empty());
  CHECK(out.has_node("conv1_pw"));
  CHECK(out.has_node("conv4_pw"));
  CHECK(report.sites.size() == 2);
  CHECK(out.node("conv1").conv().out_channels() ==
        out.node("conv1_pw").conv().in_channels());
}

TEST_CASE("finetune_kd needs labels and matching penultimate dims") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 329);
  TinySet unlabeled = small_set(4, 3, 32, 32, 330);
  FinetuneConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(finetune_kd(teacher, teacher, unlabeled, cfg), Error);

  ImageSource src = synth_patterns(20, 331);
  TinySet labeled = sample_tinyset(src, Recipe::Mode::RandomN, 8, 332);
  ModelGraph wide = build_toy_resnet(2, 16, 10, 333);
  CHECK_THROWS_AS(finetune_kd(teacher, wide, labeled, cfg), Error);
}

TEST_CASE("beta zero reduces to plain cross-entropy (teacher ignored)") {
  ModelGraph student = build_toy_resnet(2, 8, 10, 334);
  ModelGraph t1 = build_toy_resnet(2, 8, 10, 335);
  ModelGraph t2 = build_toy_resnet(2, 8, 10, 336);
  ImageSource src = synth_patterns(20, 337);
  TinySet data = sample_tinyset(src, Recipe::Mode::RandomN, 10, 338);
  FinetuneConfig cfg;
  cfg.beta = 0.0f;
  cfg.epochs = 2;
  cfg.seed = 339;
  ModelGraph a = finetune_kd(student, t1, data, cfg);
  ModelGraph b = finetune_kd(student, t2, data, cfg);
  CHECK(graphs_tensor_equal(a, b));
}

TEST_CASE("student equal to teacher starts with zero feature loss") {
  ModelGraph teacher = build_toy_resnet(2, 8, 10, 340);
  Rng rng(341);
  Tensor x = Tensor::normal({2, 3, 32, 32}, rng);
  const std::string pen = teacher.preds(teacher.sink()).at(0);
  auto a = forward_eval(teacher, x, {pen});
  auto b = forward_eval(teacher, x, {pen});
  CHECK(bitwise_equal(a.taps.at(pen), b.taps.at(pen)));
  FinetuneConfig cfg;
  CHECK(cfg.beta == 100.0f);  // paper default
}

TEST_CASE("finetuning improves tiny-set fit") {
  ModelGraph net = build_toy_resnet(1, 8, 10, 342);
  ImageSource src = synth_patterns(30, 343);
  TinySet data = sample_tinyset(src, Recipe::Mode::RandomN, 20, 344);
  FinetuneConfig cfg;
  cfg.beta = 0.0f;
  cfg.learning_rate = 0.05f;
  cfg.epochs = 30;
  cfg.batch_size = 10;
  cfg.seed = 345;
  ModelGraph tuned = finetune_kd(net, net, data, cfg);
  Accuracy before = evaluate(net, data);
  Accuracy after = evaluate(tuned, data);
  CHECK(after.top1 > before.top1);
}

TEST_CASE("evaluate: one-hot logits matching every label score 100/100") {
  // Images are one-hot channel indicators; an identity readout makes the
  // logits match the labels exactly.
  ModelGraph g;
  g.input = {10, 1, 1};
  Node gap;
  gap.id = "gap";
  gap.kind = NodeKind::GlobalAvgPool;
  g.add_node(std::move(gap), {});
  Node fl;
  fl.id = "flatten";
  fl.kind = NodeKind::Flatten;
  g.add_node(std::move(fl), {"gap"});
  Node fc;
  fc.id = "fc";
  fc.kind = NodeKind::FC;
  FCSpec fs;
  fs.weight = Tensor({10, 10}, 0.0f);
  for (int i = 0; i < 10; ++i) fs.weight.data[i * 10 + i] = 1.0f;
  fc.params = std::move(fs);
  g.add_node(std::move(fc), {"flatten"});

  TinySet data;
  std::vector<int32_t> labels;
  for (int i = 0; i < 30; ++i) {
    Tensor img({10, 1, 1}, 0.0f);
    img.data[i % 10] = 1.0f;
    data.images.push_back(std::move(img));
    labels.push_back(i % 10);
  }
  data.labels = labels;
  Accuracy acc = evaluate(g, data);
  CHECK(acc.top1 == 100.0);
  CHECK(acc.top5 == 100.0);
}

TEST_CASE("evaluate: perfect classifier and tie rules") {
  // One-hot logits matching every label.
  ImageSource src = synth_patterns(20, 346);
  TinySet data = sample_tinyset(src, Recipe::Mode::KShot, 2, 347);
  CHECK(data.size() == 20);

  // A fake graph is unnecessary: check the tie rule through a constant-logit
  // net (all weights zero -> all logits equal -> argmax picks class 0).
  ModelGraph zero = build_toy_resnet(1, 4, 10, 348);
  zero.node("fc").fc().weight.fill(0.0f);
  if (zero.node("fc").fc().bias) zero.node("fc").fc().bias->fill(0.0f);
  Accuracy acc = evaluate(zero, data);
  // Balanced set: class 0 holds 1/10 of the samples.
  CHECK(acc.top1 == doctest::Approx(10.0));
  CHECK(acc.top5 == doctest::Approx(50.0));
  CHECK(acc.top5 >= acc.top1);

  TinySet empty;
  CHECK_THROWS_AS(evaluate(zero, empty), Error);
}

TEST_CASE("trained toy teacher separates the pattern classes") {
  // Small sanity run for the desk-scale benchmark machinery: the toy net
  // must be trainable to high accuracy on the pattern source.
  ModelGraph net = build_toy_resnet(1, 8, 10, 349);
  ImageSource train_src = synth_patterns(300, 350);
  TinySet train = sample_tinyset(train_src, Recipe::Mode::RandomN, 300, 351);
  ImageSource test_src = synth_patterns(100, 352);
  TinySet test = sample_tinyset(test_src, Recipe::Mode::RandomN, 100, 353);

  FinetuneConfig cfg;
  cfg.beta = 0.0f;
  cfg.learning_rate = 0.1f;
  cfg.momentum = 0.9f;
  cfg.batch_size = 32;
  cfg.epochs = 24;
  cfg.seed = 354;
  ModelGraph trained = finetune_kd(net, net, train, cfg);
  Accuracy acc = evaluate(trained, test);
  CHECK(acc.top1 > 65.0);
}
