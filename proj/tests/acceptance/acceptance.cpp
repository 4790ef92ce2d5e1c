// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "core/bench.hpp"
#include "core/builders.hpp"
#include "core/exec.hpp"
#include "core/graph.hpp"
#include "core/recovery.hpp"
#include "core/rng.hpp"
#include "core/surgery.hpp"
#include "core/tinyset.hpp"
#include "support/reference.hpp"
#include "support/toys.hpp"

using namespace practise;
using namespace practise::testing;

namespace {

int g_failures = 0;
std::vector<std::string> g_details;

void report(int index, const std::string& name, bool pass) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", index,
              name.c_str());
  for (const auto& d : g_details) std::printf("       %s\n", d.c_str());
  g_details.clear();
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------- criterion 1

struct CostRow {
  const char* label;
  const char* name;
  const char* variant;
  std::vector<std::pair<int, int>> drops;
  double params_display, params_unit;
  double macs_display, macs_unit;
};

bool criterion_cost() {
  const double tol = 0.01 + 1e-9;
  const std::vector<CostRow> rows = {
      {"resnet34", "resnet34", "imagenet", {}, 21.80, 1e6, 3.66, 1e9},
      {"resnet34-A", "resnet34", "imagenet", {{1, 2}}, 21.72, 1e6, 3.43, 1e9},
      {"resnet34-B", "resnet34", "imagenet", {{1, 2}, {2, 2}}, 21.43, 1e6,
       3.20, 1e9},
      {"resnet34-C", "resnet34", "imagenet", {{1, 2}, {2, 2}, {3, 2}}, 20.25,
       1e6, 2.97, 1e9},
      {"resnet50", "resnet50", "imagenet", {}, 25.56, 1e6, 4.09, 1e9},
      {"resnet50-A", "resnet50", "imagenet", {{1, 2}}, 25.49, 1e6, 3.87, 1e9},
      {"resnet50-B", "resnet50", "imagenet", {{1, 2}, {2, 2}}, 25.21, 1e6,
       3.65, 1e9},
      {"resnet50-C", "resnet50", "imagenet", {{1, 2}, {2, 2}, {3, 2}}, 24.09,
       1e6, 3.43, 1e9},
      {"vgg16", "vgg16", "imagenet", {}, 138.37, 1e6, 15.47, 1e9},
      {"vgg16-A", "vgg16", "imagenet", {{1, 2}}, 138.33, 1e6, 13.62, 1e9},
      {"vgg16-B", "vgg16", "imagenet", {{1, 2}, {2, 2}}, 138.18, 1e6, 11.77,
       1e9},
      {"vgg16-C", "vgg16", "imagenet", {{1, 2}, {2, 2}, {3, 2}}, 137.59, 1e6,
       9.92, 1e9},
      {"mobilenetv2", "mobilenetv2", "imagenet", {}, 3.50, 1e6, 300.79, 1e6},
      {"mobilenetv2-A", "mobilenetv2", "imagenet", {{3, 2}}, 3.49, 1e6, 289.80,
       1e6},
      {"mobilenetv2-B", "mobilenetv2", "imagenet", {{3, 2}, {4, 2}}, 3.44, 1e6,
       279.49, 1e6},
      {"mobilenetv2-C", "mobilenetv2", "imagenet", {{3, 2}, {4, 2}, {5, 2}},
       3.32, 1e6, 256.80, 1e6},
      {"mobilenetv2-D", "mobilenetv2", "imagenet",
       {{3, 2}, {4, 2}, {5, 2}, {6, 2}}, 3.00, 1e6, 241.32, 1e6},
      {"resnet56", "resnet56", "cifar", {}, 853.02, 1e3, 125.49, 1e6},
      {"vgg16-cifar", "vgg16", "cifar", {}, 14.99, 1e6, 313.47, 1e6},
  };

  bool all = true;
  for (const auto& row : rows) {
    ModelGraph g = build_architecture(row.name, row.variant);
    for (const auto& [stage, block] : row.drops)
      drop_block(g, {stage, block, BlockRole::Inner});
    CostReport r = count_cost(g);
    const double p = r.params / row.params_unit;
    const double m = r.macs / row.macs_unit;
    const bool ok = std::fabs(p - row.params_display) <= tol &&
                    std::fabs(m - row.macs_display) <= tol;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%-14s params %9.4f (ref %7.2f)  macs %10.4f (ref %7.2f)  %s",
                  row.label, p, row.params_display, m, row.macs_display,
                  ok ? "ok" : "MISMATCH");
    g_details.push_back(buf);
    all = all && ok;
  }
  return all;
}

// ---------------------------------------------------------------- criterion 2

// 100 random inputs, max-abs tolerance 1e-4, comparing the graph before and
// after merging.
bool merged_matches(ModelGraph& g, const std::vector<Adaptor>& adaptors,
                    Rng& rng) {
  Tensor x = Tensor::normal(
      {100, g.input.channels, g.input.height, g.input.width}, rng);
  Tensor before = forward_eval(g, x).logits;
  merge_all_adaptors(g, adaptors);
  Tensor after = forward_eval(g, x).logits;
  return max_abs_diff(before, after) < 1e-4f;
}

bool criterion_merge() {
  Rng rng(2024);
  int bad_filter = 0, bad_drop = 0, bad_down = 0, bad_fold = 0;

  for (int trial = 0; trial < 50; ++trial) {
    // Filter-level pre/post on a conv-bn-relu-conv layer net.
    {
      int64_t mid = 8 + 2 * rng.next_below(8);
      ModelGraph g = make_layer_net(3, mid, 6, 5000 + trial);
      int64_t keep_n = 1 + rng.next_below(mid - 1);
      auto keep = select_keep_channels(g.node("conv1").conv(), keep_n);
      auto ins =
          insert_channel_adaptors(g, "conv1", AdaptorInit::ChannelSelect, keep);
      for (const auto& a : ins.adaptors) {
        Tensor& w = g.node(a.id).conv().weight;
        w = Tensor::uniform(w.shape, -0.8f, 0.8f, rng);
      }
      if (!merged_matches(g, ins.adaptors, rng)) ++bad_filter;
    }
    // Block drop adaptors on a toy residual net.
    {
      int width = 4 + 2 * static_cast<int>(rng.next_below(3));
      ModelGraph g = build_toy_resnet(2, width, 10, 6000 + trial);
      int stage = 1 + static_cast<int>(rng.next_below(3));
      drop_block(g, {stage, 2, BlockRole::Inner});
      auto ins = insert_block_adaptors(g, {stage, 2, BlockRole::Inner});
      for (const auto& a : ins.adaptors) {
        Tensor& w = g.node(a.id).conv().weight;
        w = Tensor::uniform(w.shape, -0.8f, 0.8f, rng);
      }
      if (!merged_matches(g, ins.adaptors, rng)) ++bad_drop;
    }
    // Downsample boundary site (three adaptors).
    {
      int width = 4 + 2 * static_cast<int>(rng.next_below(3));
      ModelGraph g = build_toy_resnet(2, width, 10, 7000 + trial);
      auto shapes = g.infer_shapes();
      const char* site = trial % 2 == 0 ? "s1b2_relu2" : "s2b2_relu2";
      int64_t c = shapes.at(site).c;
      std::vector<int64_t> keep;
      for (int64_t i = 0; i < c; ++i)
        if (rng.next_below(2) || keep.empty()) keep.push_back(i);
      auto ins =
          insert_channel_adaptors(g, site, AdaptorInit::ChannelSelect, keep);
      for (const auto& a : ins.adaptors) {
        Tensor& w = g.node(a.id).conv().weight;
        w = Tensor::uniform(w.shape, -0.8f, 0.8f, rng);
      }
      if (!merged_matches(g, ins.adaptors, rng)) ++bad_down;
    }
    // BN fold.
    {
      int64_t mid = 4 + rng.next_below(12);
      ModelGraph g = make_layer_net(3, mid, 5, 8000 + trial);
      Tensor x = Tensor::normal({100, 3, 8, 8}, rng);
      Tensor before = forward_eval(g, x).logits;
      fold_all_bn(g);
      Tensor after = forward_eval(g, x).logits;
      if (max_abs_diff(before, after) >= 1e-4f) ++bad_fold;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "50 cases per kind: filter %d bad, block-drop %d bad, "
                "downsample %d bad, bn-fold %d bad",
                bad_filter, bad_drop, bad_down, bad_fold);
  g_details.push_back(buf);
  return bad_filter + bad_drop + bad_down + bad_fold == 0;
}

// ---------------------------------------------------------------- criterion 3

// Two-block residual toy net built by hand: stem, one 8-channel block, one
// strided 16-channel block with a downsample conv, classifier.
ModelGraph two_block_net(uint64_t seed) {
  ModelGraph g;
  g.input = {3, 16, 16};
  Rng rng(seed);
  auto conv = [&](const std::string& id, int64_t out, int64_t in, int64_t k,
                  int stride, int pad, const std::vector<std::string>& preds) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Conv;
    ConvSpec s;
    s.weight = Tensor::uniform({out, in, k, k}, -0.4f, 0.4f, rng);
    s.stride_h = s.stride_w = stride;
    s.pad_h = s.pad_w = pad;
    n.params = std::move(s);
    g.add_node(std::move(n), preds);
    return id;
  };
  auto bn = [&](const std::string& id, int64_t c, const std::string& pred) {
    Node n;
    n.id = id;
    n.kind = NodeKind::BN;
    n.params = random_bn(c, seed + std::hash<std::string>{}(id));
    g.add_node(std::move(n), {pred});
    return id;
  };
  auto relu = [&](const std::string& id, const std::string& pred) {
    Node n;
    n.id = id;
    n.kind = NodeKind::ReLU;
    g.add_node(std::move(n), {pred});
    return id;
  };
  auto add = [&](const std::string& id, const std::string& a,
                 const std::string& b) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Add;
    g.add_node(std::move(n), {a, b});
    return id;
  };

  conv("stem", 8, 3, 3, 1, 1, {});
  bn("stembn", 8, "stem");
  relu("stemrelu", "stembn");
  conv("b1_conv1", 8, 8, 3, 1, 1, {"stemrelu"});
  bn("b1_bn1", 8, "b1_conv1");
  relu("b1_relu1", "b1_bn1");
  conv("b1_conv2", 8, 8, 3, 1, 1, {"b1_relu1"});
  bn("b1_bn2", 8, "b1_conv2");
  add("b1_add", "b1_bn2", "stemrelu");
  relu("b1_relu2", "b1_add");
  conv("b2_conv1", 16, 8, 3, 2, 1, {"b1_relu2"});
  bn("b2_bn1", 16, "b2_conv1");
  relu("b2_relu1", "b2_bn1");
  conv("b2_conv2", 16, 16, 3, 1, 1, {"b2_relu1"});
  bn("b2_bn2", 16, "b2_conv2");
  conv("b2_down", 16, 8, 1, 2, 0, {"b1_relu2"});
  bn("b2_downbn", 16, "b2_down");
  add("b2_add", "b2_bn2", "b2_downbn");
  relu("b2_relu2", "b2_add");
  Node gap;
  gap.id = "gap";
  gap.kind = NodeKind::GlobalAvgPool;
  g.add_node(std::move(gap), {"b2_relu2"});
  Node fl;
  fl.id = "flatten";
  fl.kind = NodeKind::Flatten;
  g.add_node(std::move(fl), {"gap"});
  Node fc;
  fc.id = "fc";
  fc.kind = NodeKind::FC;
  FCSpec fs;
  fs.weight = Tensor::uniform({10, 16}, -0.4f, 0.4f, rng);
  fs.bias = Tensor({10}, 0.0f);
  fc.params = std::move(fs);
  g.add_node(std::move(fc), {"flatten"});
  return g;
}

bool criterion_gradients() {
  ModelGraph teacher = two_block_net(42);
  ModelGraph student = teacher;
  auto keep = select_keep_channels(student.node("b1_conv1").conv(), 5);
  auto ins = insert_channel_adaptors(student, "b1_conv1",
                                     AdaptorInit::ChannelSelect, keep);

  Rng rng(43);
  Tensor x = Tensor::normal({4, 3, 16, 16}, rng);
  for (const auto& a : ins.adaptors) {
    Tensor& w = student.node(a.id).conv().weight;
    for (float& v : w.data) v += 0.05f * rng.next_normal();
  }

  const std::vector<std::string> taps = {"b1_conv2"};
  const std::set<std::string> train_bn = {ins.site_bn.begin(),
                                          ins.site_bn.end()};
  auto t_out = forward_eval(teacher, x, taps);
  const Tensor t_tap = t_out.taps.at("b1_conv2");

  auto ref_loss = [&](const ModelGraph& g) {
    auto r = ref_forward(g, x, taps, train_bn);
    const auto& s = r.taps.at("b1_conv2");
    double acc = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
      double d = s[i] - static_cast<double>(t_tap.data[i]);
      acc += d * d;
    }
    return acc / static_cast<double>(s.size());
  };

  Executor sex;
  ForwardOptions opts;
  opts.taps = taps;
  opts.keep_state = true;
  opts.batch_stat_bn = train_bn;
  auto sr = sex.forward(student, x, opts);
  const Tensor& s_tap = sr.taps.at("b1_conv2");
  Tensor seed(s_tap.shape);
  for (int64_t i = 0; i < s_tap.numel(); ++i)
    seed.data[i] = 2.0f * (s_tap.data[i] - t_tap.data[i]) /
                   static_cast<float>(s_tap.numel());
  std::set<ParamKey> wanted;
  for (const auto& a : ins.adaptors)
    wanted.insert({a.id, ParamSlot::ConvWeight});
  std::map<ParamKey, Tensor> grads;
  sex.backward(student, {{"b1_conv2", seed}}, wanted, grads);

  // Relative error at the gradient's scale: ||analytic - fd||inf / ||fd||inf.
  // Per-entry ratios are ill-posed for near-zero entries, where the
  // second-order truncation of the step-1e-3 secant dominates.
  double fd_norm = 0.0, worst_abs = 0.0;
  int checked = 0;
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
      ++checked;
    }
  }
  const double worst = worst_abs / fd_norm;
  char buf[120];
  std::snprintf(buf, sizeof(buf),
                "%d adaptor weights checked, relative error %.2e "
                "(tolerance 1e-3)",
                checked, worst);
  g_details.push_back(buf);
  return worst < 1e-3;
}

// ---------------------------------------------------------------- criterion 4

bool criterion_identity() {
  bool ok = true;
  Rng rng(90);

  // Identity insertion never changes the function beyond 1e-5.
  {
    ModelGraph g = make_layer_net(3, 32, 8, 901);
    ModelGraph orig = g;
    insert_channel_adaptors(g, "conv1", AdaptorInit::Identity, {});
    Tensor x = Tensor::normal({4, 3, 8, 8}, rng);
    float d = max_abs_diff(forward_eval(orig, x).logits,
                           forward_eval(g, x).logits);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "identity chain insertion: max diff %.2e",
                  d);
    g_details.push_back(buf);
    ok = ok && d < 1e-5f;
  }
  {
    ModelGraph g = build_toy_resnet(2, 8, 10, 902);
    ModelGraph orig = g;
    insert_channel_adaptors(g, "s1b2_relu2", AdaptorInit::Identity, {});
    Tensor x = Tensor::normal({4, 3, 32, 32}, rng);
    float d = max_abs_diff(forward_eval(orig, x).logits,
                           forward_eval(g, x).logits);
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "identity boundary insertion: max diff %.2e", d);
    g_details.push_back(buf);
    ok = ok && d < 1e-5f;
  }
  {
    ModelGraph vanilla = build_toy_resnet(2, 8, 10, 903);
    drop_block(vanilla, {2, 2, BlockRole::Inner});
    ModelGraph student = vanilla;
    insert_block_adaptors(student, {2, 2, BlockRole::Inner});
    Tensor x = Tensor::normal({4, 3, 32, 32}, rng);
    float d = max_abs_diff(forward_eval(vanilla, x).logits,
                           forward_eval(student, x).logits);
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "identity block-drop insertion: max diff %.2e", d);
    g_details.push_back(buf);
    ok = ok && d < 1e-5f;
  }

  // Initial mimic loss of a channel-select job equals the vanilla-pruned
  // model's tap MSE to 1e-6.
  {
    ModelGraph teacher = make_layer_net(3, 64, 8, 904);
    ModelGraph student = teacher;
    auto keep = select_keep_channels(teacher.node("conv1").conv(), 24);
    auto ins = insert_channel_adaptors(student, "conv1",
                                       AdaptorInit::ChannelSelect, keep);
    MimicJob job;
    job.teacher = &teacher;
    job.student = &student;
    for (const auto& a : ins.adaptors) job.trainable.push_back(a.id);
    job.taps = ins.taps;
    job.site_bn = ins.site_bn;

    ModelGraph pruned = teacher;
    prune_channels(pruned, "conv1", keep);
    MimicJob vanilla_job;
    vanilla_job.teacher = &teacher;
    vanilla_job.student = &pruned;
    vanilla_job.taps = ins.taps;

    TinySet data = synth_gaussian(8, 3, 8, 8, 905);
    double a = mimic_eval_loss(job, data, 8);
    double b = mimic_eval_loss(vanilla_job, data, 8);
    char buf[120];
    std::snprintf(buf, sizeof(buf),
                  "select-init initial loss %.8f vs vanilla tap mse %.8f "
                  "(diff %.2e)",
                  a, b, std::fabs(a - b));
    g_details.push_back(buf);
    ok = ok && std::fabs(a - b) < 1e-6;
  }
  return ok;
}

// ------------------------------------------------------- criteria 5 and 6

struct DeskScaleResult {
  bool trained_teacher = false;
  int wins = 0;
  double std_practise = 0.0, std_label = 0.0;
  double teacher_acc = 0.0, vanilla_acc = 0.0;
  std::vector<double> practise_acc, label_acc;
};

DeskScaleResult desk_scale_benchmark() {
  DeskScaleResult out;
  ImageSource tr_src = synth_patterns(1000, 100);
  TinySet train = sample_tinyset(tr_src, Recipe::Mode::RandomN, 1000, 101);
  ImageSource te_src = synth_patterns(500, 999);
  TinySet test = sample_tinyset(te_src, Recipe::Mode::RandomN, 500, 102);

  ModelGraph teacher = build_toy_resnet(2, 12, 10, 7);
  {
    FinetuneConfig cfg;
    cfg.beta = 0.0f;
    cfg.learning_rate = 0.1f;
    cfg.momentum = 0.9f;
    cfg.batch_size = 64;
    cfg.epochs = 6;
    cfg.seed = 103;
    teacher = finetune_kd(teacher, teacher, train, cfg);
  }
  out.teacher_acc = evaluate(teacher, test).top1;
  out.trained_teacher = out.teacher_acc >= 80.0;

  ModelGraph vanilla = teacher;
  drop_block(vanilla, {1, 2, BlockRole::Inner});
  out.vanilla_acc = evaluate(vanilla, test).top1;

  // Five disjoint 50-image draws from one 250-image sample.
  TinySet pool = sample_tinyset(tr_src, Recipe::Mode::RandomN, 250, 555);
  for (int s = 0; s < 5; ++s) {
    TinySet tiny;
    tiny.recipe = pool.recipe;
    std::vector<int32_t> labels;
    for (int i = s * 50; i < (s + 1) * 50; ++i) {
      tiny.images.push_back(pool.images[i]);
      labels.push_back((*pool.labels)[i]);
    }
    tiny.labels = labels;

    FinetuneConfig ft;
    ft.beta = 0.0f;
    ft.learning_rate = 1e-4f;
    ft.batch_size = 256;
    ft.epochs = 40;
    ft.seed = 200 + s;
    ModelGraph label_only = finetune_kd(vanilla, teacher, tiny, ft);
    out.label_acc.push_back(evaluate(label_only, test).top1);

    CompressionPlan plan;
    plan.scheme = CompressionPlan::Scheme::BlockDrop;
    plan.blocks = {{1, 2}};
    MimicConfig mc;
    mc.learning_rate = 1e-2f;
    mc.batch_size = 50;
    mc.max_epochs = 100;
    mc.patience = 15;
    mc.seed = 300 + s;
    ModelGraph recovered = run_practise(teacher, plan, tiny, mc, 0, nullptr);
    FinetuneConfig kd = ft;
    kd.beta = 100.0f;
    kd.seed = 400 + s;
    ModelGraph final_model = finetune_kd(recovered, teacher, tiny, kd);
    out.practise_acc.push_back(evaluate(final_model, test).top1);

    if (out.practise_acc.back() > out.label_acc.back() &&
        out.practise_acc.back() > out.vanilla_acc)
      ++out.wins;
  }

  auto stddev = [](const std::vector<double>& v) {
    double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return std::sqrt(sq / v.size());
  };
  out.std_practise = stddev(out.practise_acc);
  out.std_label = stddev(out.label_acc);
  return out;
}

// ---------------------------------------------------------------- criterion 7

bool criterion_unstructured() {
  Rng rng(77);
  int bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    int64_t o = 3 + rng.next_below(8);
    int64_t c = 3 + rng.next_below(8);
    int64_t i = 3 + rng.next_below(8);
    int64_t k = 1 + 2 * rng.next_below(2);
    Tensor w = Tensor::normal({o, c, k, k}, rng);
    Tensor u = Tensor::normal({c, i, 1, 1}, rng);
    Tensor m({o, i, k, k});
    for (float& v : m.data) v = rng.next_double() < 0.1 ? 1.0f : 0.0f;
    Tensor out = compose_and_mask(w, u, m);
    for (int64_t j = 0; j < out.numel(); ++j) {
      if (m.data[j] == 0.0f && out.data[j] != 0.0f) {
        ++bad;
        break;
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf),
                "50 cases at 90%% sparsity, %d zero-set violations", bad);
  g_details.push_back(buf);
  return bad == 0;
}

// ---------------------------------------------------------------- criterion 8

bool criterion_latency() {
  struct Variant {
    const char* label;
    std::vector<std::pair<int, int>> drops;
    double median = 0.0;
  };
  std::vector<Variant> variants = {
      {"raw", {}},
      {"A", {{1, 2}}},
      {"B", {{1, 2}, {2, 2}}},
      {"C", {{1, 2}, {2, 2}, {3, 2}}},
  };
  for (auto& v : variants) {
    ModelGraph g = build_architecture("resnet34", "imagenet");
    for (const auto& [stage, block] : v.drops)
      drop_block(g, {stage, block, BlockRole::Inner});
    // The A/B gap is ~7%, so the median needs a decent sample.
    LatencyReport r = measure_latency(g, std::string("resnet34-") + v.label,
                                      1, 2, 15, 1, 11);
    v.median = r.median_ms;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "resnet34-%s median %.1f ms", v.label,
                  v.median);
    g_details.push_back(buf);
  }
  return variants[3].median <= variants[2].median &&
         variants[2].median <= variants[1].median &&
         variants[1].median <= variants[0].median;
}

}  // namespace

int main() {
  auto t0 = std::chrono::steady_clock::now();

  report(1, "cost reproduction against the reference tables",
         criterion_cost());
  report(2, "merge exactness over randomized surgeries", criterion_merge());
  report(3, "mimic-loss gradients match central finite differences",
         criterion_gradients());
  report(4, "identity insertions and channel-select initial loss",
         criterion_identity());

  DeskScaleResult desk = desk_scale_benchmark();
  {
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "teacher %.1f%% (>=80 required), vanilla drop %.1f%%",
                  desk.teacher_acc, desk.vanilla_acc);
    g_details.push_back(buf);
    for (size_t s = 0; s < desk.practise_acc.size(); ++s) {
      std::snprintf(buf, sizeof(buf),
                    "draw %zu: recovery+finetune %.1f%% vs label-only %.1f%%",
                    s, desk.practise_acc[s], desk.label_acc[s]);
      g_details.push_back(buf);
    }
    std::snprintf(buf, sizeof(buf), "wins %d/5 (need >=4)", desk.wins);
    g_details.push_back(buf);
    report(5, "end-to-end recovery at desk scale",
           desk.trained_teacher && desk.wins >= 4);
  }
  {
    char buf[140];
    std::snprintf(buf, sizeof(buf),
                  "stddev recovery %.3f <= stddev label-only %.3f",
                  desk.std_practise, desk.std_label);
    g_details.push_back(buf);
    report(6, "stability across tiny-set draws",
           desk.std_practise <= desk.std_label);
  }

  report(7, "unstructured mask zero-set contract", criterion_unstructured());
  report(8, "latency ordering of the block-dropped variants",
         criterion_latency());

  std::printf("acceptance finished in %.0f s, %d criterion(s) failed\n",
              elapsed(t0), g_failures);
  return g_failures == 0 ? 0 : 1;
}
