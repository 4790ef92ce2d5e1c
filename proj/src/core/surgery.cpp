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

#include "core/surgery.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "core/errors.hpp"

namespace practise {

namespace {

bool is_conv(const ModelGraph& g, const std::string& id) {
  return g.node(id).kind == NodeKind::Conv;
}

Tensor selection_matrix(const std::vector<int64_t>& keep, int64_t c,
                        bool transpose) {
  const int64_t n = static_cast<int64_t>(keep.size());
  Tensor t = transpose ? Tensor({c, n, 1, 1}, 0.0f) : Tensor({n, c, 1, 1}, 0.0f);
  for (int64_t j = 0; j < n; ++j) {
    if (transpose)
      t.data[keep[j] * n + j] = 1.0f;
    else
      t.data[j * c + keep[j]] = 1.0f;
  }
  return t;
}

Node make_adaptor_node(const std::string& id, Tensor weight) {
  Node n;
  n.id = id;
  n.kind = NodeKind::Conv;
  ConvSpec spec;
  spec.weight = std::move(weight);
  spec.stride_h = spec.stride_w = 1;
  spec.pad_h = spec.pad_w = 0;
  spec.groups = 1;
  n.params = std::move(spec);
  return n;
}

// Splices `node` between `pred` and the given consumers of `pred`.
void splice_after(ModelGraph& g, Node node,
                  const std::string& pred,
                  const std::vector<std::string>& consumers) {
  const std::string id = node.id;
  g.add_node(std::move(node), {pred});
  for (const auto& c : consumers) g.replace_pred(c, pred, id);
}

// True if `conv_id` sits on a shortcut branch: its output reaches an Add
// through at most one BN.
bool feeds_add_directly(const ModelGraph& g, const std::string& conv_id) {
  auto succs = g.succs(conv_id);
  if (succs.size() != 1) return false;
  std::string cur = succs[0];
  if (g.node(cur).kind == NodeKind::BN) {
    auto s2 = g.succs(cur);
    if (s2.size() != 1) return false;
    cur = s2[0];
  }
  return g.node(cur).kind == NodeKind::Add;
}

struct ChainConsumer {
  std::string before;  // node the conv3 copy is inserted in front of
  std::string from;    // its predecessor on the site path
  std::string target;  // merge target (Conv or FC)
};

struct ChainSite {
  std::string producer;
  std::string tail;  // last channel-shaped node of the site pattern
  std::optional<std::string> bn;
  std::vector<ChainConsumer> consumers;
};

// producer conv -> [BN] -> [ReLU] -> (MaxPool)* -> consumer convs / FC tail.
ChainSite analyze_chain_site(const ModelGraph& g, const std::string& site) {
  const Node& p = g.node(site);
  if (p.kind != NodeKind::Conv)
    throw_data("site '" + site + "' is not a conv node");
  if (p.conv().groups != 1)
    throw_data("site '" + site + "' is a grouped conv and cannot be pruned");

  ChainSite out;
  out.producer = site;
  std::string cur = site;
  auto next_single = [&](NodeKind kind) -> bool {
    auto succs = g.succs(cur);
    if (succs.size() != 1) return false;
    if (g.node(succs[0]).kind != kind) return false;
    cur = succs[0];
    return true;
  };
  if (next_single(NodeKind::BN)) out.bn = cur;
  if (!next_single(NodeKind::ReLU)) next_single(NodeKind::ReLU6);
  out.tail = cur;

  // Walk forward through pools to the consuming convs.
  std::vector<std::pair<std::string, std::string>> frontier;  // (node, from)
  for (const auto& s : g.succs(cur)) frontier.push_back({s, cur});
  if (frontier.empty())
    throw_data("site '" + site + "' has no consumers (logits cannot be pruned)");
  while (!frontier.empty()) {
    auto [id, from] = frontier.back();
    frontier.pop_back();
    const Node& n = g.node(id);
    switch (n.kind) {
      case NodeKind::Conv:
        if (n.conv().groups != 1)
          throw_data("site '" + site + "' feeds grouped conv " + id);
        out.consumers.push_back({id, from, id});
        break;
      case NodeKind::MaxPool:
        for (const auto& s : g.succs(id)) frontier.push_back({s, id});
        break;
      case NodeKind::GlobalAvgPool:
      case NodeKind::Flatten: {
        // Linear channel-preserving tail; must end in an FC.
        std::string walk = id;
        while (g.node(walk).kind == NodeKind::GlobalAvgPool ||
               g.node(walk).kind == NodeKind::Flatten) {
          auto s = g.succs(walk);
          if (s.size() != 1)
            throw_data("site '" + site + "' has a branching classifier tail");
          walk = s[0];
        }
        if (g.node(walk).kind != NodeKind::FC)
          throw_data("site '" + site + "' classifier tail does not end in FC");
        out.consumers.push_back({id, from, walk});
        break;
      }
      default:
        throw_data("site '" + site + "' is not prunable: feeds " +
                   node_kind_name(n.kind) + " node " + id);
    }
  }
  std::sort(out.consumers.begin(), out.consumers.end(),
            [](const ChainConsumer& a, const ChainConsumer& b) {
              return a.before < b.before;
            });
  return out;
}

void redim_bn(ModelGraph& g, const std::string& bn_id,
              const std::vector<int64_t>& keep) {
  BNSpec& bn = g.node(bn_id).bn();
  auto slice = [&](const Tensor& t) {
    Tensor out({static_cast<int64_t>(keep.size())});
    for (size_t j = 0; j < keep.size(); ++j) out.data[j] = t.data[keep[j]];
    return out;
  };
  bn.gamma = slice(bn.gamma);
  bn.beta = slice(bn.beta);
  bn.running_mean = slice(bn.running_mean);
  bn.running_var = slice(bn.running_var);
}

}  // namespace

InsertResult insert_channel_adaptors(ModelGraph& g, const std::string& site,
                                     AdaptorInit init,
                                     const std::vector<int64_t>& keep_in) {
  if (!g.has_node(site)) throw_data("unknown site " + site);
  const Node& anchor = g.node(site);

  if (anchor.kind == NodeKind::Conv) {
    ChainSite chain = analyze_chain_site(g, site);
    const int64_t c = g.node(site).conv().out_channels();
    std::vector<int64_t> keep = keep_in;
    if (init == AdaptorInit::Identity && keep.empty()) {
      keep.resize(c);
      std::iota(keep.begin(), keep.end(), 0);
    }
    const int64_t n = static_cast<int64_t>(keep.size());
    if (n < 1 || n > c) throw_data("kept channel count out of range");
    for (size_t i = 0; i < keep.size(); ++i) {
      if (keep[i] < 0 || keep[i] >= c ||
          (i > 0 && keep[i] <= keep[i - 1]))
        throw_data("keep indices must be strictly increasing and in range");
    }
    if (init == AdaptorInit::Identity && n != c)
      throw_data("identity init requires keeping every channel");

    InsertResult result;
    // conv2: c -> n, right after the producer (before the site BN).
    const std::string pre_id = site + "_ad_pre";
    splice_after(g, make_adaptor_node(pre_id, selection_matrix(keep, c, false)),
                 site, g.succs(site));
    result.adaptors.push_back(
        {pre_id, site, Adaptor::Side::Post, {site}});

    if (chain.bn) {
      redim_bn(g, *chain.bn, keep);
      result.site_bn.push_back(*chain.bn);
    }

    // conv3 copies: n -> c, one per consumer.
    int copy = 0;
    for (const auto& consumer : chain.consumers) {
      const std::string post_id =
          site + "_ad_post" + (chain.consumers.size() > 1
                                   ? std::to_string(copy++)
                                   : std::string());
      Node node = make_adaptor_node(post_id, selection_matrix(keep, c, true));
      const std::string id = node.id;
      g.add_node(std::move(node), {consumer.from});
      g.replace_pred(consumer.before, consumer.from, id);
      result.adaptors.push_back(
          {post_id, site, Adaptor::Side::Pre, {consumer.target}});
      result.taps.push_back({consumer.target, consumer.target});
    }
    return result;
  }

  // Block-boundary site: the tensor produced by `site` feeds the next
  // block's first conv and its downsample conv.
  auto consumers = g.succs(site);
  if (consumers.size() < 2)
    throw_data("site '" + site + "' is not prunable (no boundary branch)");
  std::vector<std::string> down, main;
  for (const auto& cid : consumers) {
    if (!is_conv(g, cid))
      throw_data("site '" + site + "' feeds non-conv consumer " + cid);
    if (g.node(cid).conv().groups != 1)
      throw_data("site '" + site + "' feeds grouped conv " + cid);
    (feeds_add_directly(g, cid) ? down : main).push_back(cid);
  }
  if (down.size() != 1 || main.empty())
    throw_data("site '" + site +
               "' is not a boundary with a downsampling shortcut");

  auto shapes = g.infer_shapes();
  const int64_t c = shapes.at(site).c;
  std::vector<int64_t> keep = keep_in;
  if (init == AdaptorInit::Identity && keep.empty()) {
    keep.resize(c);
    std::iota(keep.begin(), keep.end(), 0);
  }
  const int64_t n = static_cast<int64_t>(keep.size());
  if (n < 1 || n > c) throw_data("kept channel count out of range");
  if (init == AdaptorInit::Identity && n != c)
    throw_data("identity init requires keeping every channel");

  InsertResult result;
  std::vector<std::string> all_targets = main;
  all_targets.push_back(down[0]);
  std::sort(all_targets.begin(), all_targets.end());

  const std::string pre_id = site + "_ad_pre";
  const std::string post_id = site + "_ad_post";
  splice_after(g, make_adaptor_node(pre_id, selection_matrix(keep, c, false)),
               site, consumers);
  splice_after(g, make_adaptor_node(post_id, selection_matrix(keep, c, true)),
               pre_id, g.succs(pre_id));
  result.adaptors.push_back({post_id, site, Adaptor::Side::Pre, all_targets});
  result.adaptors.push_back({pre_id, site, Adaptor::Side::Pre, all_targets});

  // Extra adaptor on the downsample output (Side::Post into the downsample).
  const std::string& ds = down[0];
  const int64_t dc = g.node(ds).conv().out_channels();
  std::vector<int64_t> all(dc);
  std::iota(all.begin(), all.end(), 0);
  const std::string ds_id = ds + "_ad_ds";
  splice_after(g, make_adaptor_node(ds_id, selection_matrix(all, dc, false)),
               ds, g.succs(ds));
  result.adaptors.push_back({ds_id, ds, Adaptor::Side::Post, {ds}});

  for (const auto& m : main) result.taps.push_back({m, m});
  result.taps.push_back({ds, ds_id});
  return result;
}

namespace {

// First conv of a tagged block in evaluation order, plus the shortcut conv
// when the block has one.
struct BlockConvs {
  std::string first;
  std::optional<std::string> down;
};

BlockConvs block_convs(const ModelGraph& g, int stage, int block) {
  // Entry convs are those whose predecessor lies outside the block; the one
  // feeding the Add is the shortcut, the other is the first main-path conv.
  BlockConvs out;
  for (const auto& id : g.topo_order()) {
    auto tag = g.tag_of(id);
    if (!tag || tag->stage != stage || tag->block != block) continue;
    if (g.node(id).kind != NodeKind::Conv) continue;
    const auto& preds = g.preds(id);
    bool entry = preds.empty();
    if (!preds.empty()) {
      auto ptag = g.tag_of(preds[0]);
      entry = !ptag || ptag->stage != stage || ptag->block != block;
    }
    if (!entry) continue;
    if (feeds_add_directly(g, id)) {
      if (!out.down) out.down = id;
    } else if (out.first.empty()) {
      out.first = id;
    }
  }
  return out;
}

bool graph_has_add(const ModelGraph& g) {
  for (const auto& id : g.order())
    if (g.node(id).kind == NodeKind::Add) return true;
  return false;
}

Adaptor splice_identity_before_conv(ModelGraph& g, const std::string& conv_id,
                                    const std::map<std::string, ShapeCHW>& shapes) {
  const auto& preds = g.preds(conv_id);
  if (preds.size() != 1) throw_internal("conv with multiple preds: " + conv_id);
  const std::string pred = preds[0];
  const int64_t c = shapes.at(pred).c;
  std::vector<int64_t> all(c);
  std::iota(all.begin(), all.end(), 0);
  const std::string id = conv_id + "_ad";
  Node node = make_adaptor_node(id, selection_matrix(all, c, false));
  g.add_node(std::move(node), {pred});
  g.replace_pred(conv_id, pred, id);
  return {id, conv_id, Adaptor::Side::Pre, {conv_id}};
}

}  // namespace

InsertResult insert_block_adaptors(ModelGraph& g, const BlockTag& dropped) {
  if (dropped.role == BlockRole::First || dropped.block < 2)
    throw_data("only inner blocks can be dropped");
  auto shapes = g.infer_shapes();
  InsertResult result;

  // Stage extents from the surviving tags.
  int max_block = 0, max_stage = 0;
  bool next_stage_exists = false;
  for (const auto& [id, tag] : g.block_tags) {
    max_stage = std::max(max_stage, tag.stage);
    if (tag.stage == dropped.stage) max_block = std::max(max_block, tag.block);
    if (tag.stage == dropped.stage + 1) next_stage_exists = true;
  }
  if (dropped.stage > max_stage)
    throw_data("dropped block names a stage that does not exist");

  if (graph_has_add(g)) {
    // Residual strategy: adapt the first conv of every remaining block at or
    // after the dropped index, then the next stage's entry convs.
    for (int b = dropped.block; b <= max_block; ++b) {
      BlockConvs convs = block_convs(g, dropped.stage, b);
      if (convs.first.empty()) continue;
      result.adaptors.push_back(
          splice_identity_before_conv(g, convs.first, shapes));
      result.taps.push_back({convs.first, convs.first});
    }
    if (next_stage_exists) {
      BlockConvs convs = block_convs(g, dropped.stage + 1, 1);
      if (!convs.first.empty()) {
        result.adaptors.push_back(
            splice_identity_before_conv(g, convs.first, shapes));
        result.taps.push_back({convs.first, convs.first});
      }
      if (convs.down) {
        result.adaptors.push_back(
            splice_identity_before_conv(g, *convs.down, shapes));
        result.taps.push_back({*convs.down, *convs.down});
      }
    }
  } else {
    // VGG-like: one adaptor before the next conv, one tap at its output.
    std::string next_conv;
    for (int b = dropped.block; b <= max_block && next_conv.empty(); ++b)
      next_conv = block_convs(g, dropped.stage, b).first;
    for (int s = dropped.stage + 1; s <= max_stage && next_conv.empty(); ++s)
      next_conv = block_convs(g, s, 1).first;
    if (!next_conv.empty()) {
      result.adaptors.push_back(
          splice_identity_before_conv(g, next_conv, shapes));
      result.taps.push_back({next_conv, next_conv});
    }
  }

  if (result.adaptors.empty()) {
    // Nothing left downstream but the classifier: adapt in front of the
    // global pool and merge into the FC.
    std::string gap_id, fc_id;
    for (const auto& id : g.topo_order()) {
      if (g.node(id).kind == NodeKind::GlobalAvgPool) gap_id = id;
      if (g.node(id).kind == NodeKind::FC) fc_id = id;
    }
    if (gap_id.empty() || fc_id.empty())
      throw_data("no adaptor site remains downstream of the dropped block");
    const std::string pred = g.preds(gap_id).at(0);
    const int64_t c = shapes.at(pred).c;
    std::vector<int64_t> all(c);
    std::iota(all.begin(), all.end(), 0);
    const std::string id = gap_id + "_ad";
    Node node = make_adaptor_node(id, selection_matrix(all, c, false));
    g.add_node(std::move(node), {pred});
    g.replace_pred(gap_id, pred, id);
    result.adaptors.push_back({id, gap_id, Adaptor::Side::Pre, {fc_id}});
    result.taps.push_back({fc_id, fc_id});
  }
  return result;
}

ConvSpec merge_adjacent_linear(const Tensor& adaptor_weight,
                               const ConvSpec& target, Adaptor::Side side) {
  if (target.groups != 1)
    throw_data("cannot merge an adaptor into a grouped conv");
  Tensor u = adaptor_weight;
  if (u.rank() == 4) {
    if (u.dim(2) != 1 || u.dim(3) != 1)
      throw_data("adaptor kernel must be 1x1");
    u.shape = {u.dim(0), u.dim(1)};
  }
  if (u.rank() != 2) throw_data("adaptor weight must be 2-d or 4-d");
  const int64_t rows = u.dim(0), cols = u.dim(1);
  const int64_t co = target.out_channels(), ci = target.in_channels();
  const int64_t khw = target.kernel_h() * target.kernel_w();

  ConvSpec merged = target;
  if (side == Adaptor::Side::Post) {
    // U after W: W'[n,i,:,:] = sum_c U[n,c] W[c,i,:,:]
    if (cols != co)
      throw_data("post-merge dimension mismatch: adaptor expects " +
                 std::to_string(cols) + " channels, conv produces " +
                 std::to_string(co));
    merged.weight = Tensor({rows, ci, target.kernel_h(), target.kernel_w()});
    for (int64_t n = 0; n < rows; ++n)
      for (int64_t c = 0; c < co; ++c) {
        const float uv = u.data[n * cols + c];
        if (uv == 0.0f) continue;
        const float* src = target.weight.ptr() + c * ci * khw;
        float* dst = merged.weight.ptr() + n * ci * khw;
        for (int64_t j = 0; j < ci * khw; ++j) dst[j] += uv * src[j];
      }
    if (target.bias) {
      Tensor b({rows}, 0.0f);
      for (int64_t n = 0; n < rows; ++n)
        for (int64_t c = 0; c < co; ++c)
          b.data[n] += u.data[n * cols + c] * target.bias->data[c];
      merged.bias = std::move(b);
    }
  } else {
    // V before W: W'[o,n,:,:] = sum_c W[o,c,:,:] V[c,n]; bias unchanged.
    if (rows != ci)
      throw_data("pre-merge dimension mismatch: adaptor produces " +
                 std::to_string(rows) + " channels, conv expects " +
                 std::to_string(ci));
    merged.weight = Tensor({co, cols, target.kernel_h(), target.kernel_w()});
    for (int64_t o = 0; o < co; ++o)
      for (int64_t c = 0; c < ci; ++c) {
        const float* src = target.weight.ptr() + (o * ci + c) * khw;
        for (int64_t n = 0; n < cols; ++n) {
          const float vv = u.data[c * cols + n];
          if (vv == 0.0f) continue;
          float* dst = merged.weight.ptr() + (o * cols + n) * khw;
          for (int64_t j = 0; j < khw; ++j) dst[j] += vv * src[j];
        }
      }
  }
  return merged;
}

namespace {

// FC pre-merge: the adaptor's 1x1 mix is absorbed across the flattened
// spatial blocks: W'[k, n*HW+s] = sum_c W[k, c*HW+s] V[c, n].
FCSpec merge_into_fc(const Tensor& adaptor_weight, const FCSpec& fc,
                     int64_t spatial) {
  Tensor v = adaptor_weight;
  if (v.rank() == 4) v.shape = {v.dim(0), v.dim(1)};
  const int64_t c = v.dim(0), n = v.dim(1);
  if (fc.in_features() != c * spatial)
    throw_data("fc pre-merge dimension mismatch");
  FCSpec merged = fc;
  merged.weight = Tensor({fc.out_features(), n * spatial}, 0.0f);
  for (int64_t k = 0; k < fc.out_features(); ++k)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t nn = 0; nn < n; ++nn) {
        const float vv = v.data[ch * n + nn];
        if (vv == 0.0f) continue;
        const float* src = fc.weight.ptr() + k * c * spatial + ch * spatial;
        float* dst = merged.weight.ptr() + k * n * spatial + nn * spatial;
        for (int64_t s = 0; s < spatial; ++s) dst[s] += vv * src[s];
      }
  return merged;
}

void splice_out(ModelGraph& g, const std::string& id) {
  const auto preds = g.preds(id);
  if (preds.size() != 1) throw_internal("cannot splice out " + id);
  const std::string pred = preds[0];
  for (const auto& s : g.succs(id)) g.replace_pred(s, id, pred);
  g.remove_node(id);
}

}  // namespace

void merge_adaptor(ModelGraph& g, const Adaptor& adaptor) {
  const Node& a = g.node(adaptor.id);
  const Tensor& u = a.conv().weight;

  if (adaptor.side == Adaptor::Side::Post) {
    if (adaptor.merge_targets.size() != 1)
      throw_internal("post adaptor must have exactly one target");
    const std::string& t = adaptor.merge_targets[0];
    if (g.preds(adaptor.id).size() != 1 || g.preds(adaptor.id)[0] != t)
      throw_data("adaptor " + adaptor.id + " is not adjacent to " + t);
    if (g.succs(t).size() != 1)
      throw_data("conv " + t + " has consumers besides the adaptor");
    g.node(t).params = merge_adjacent_linear(u, g.node(t).conv(),
                                             Adaptor::Side::Post);
    splice_out(g, adaptor.id);
    return;
  }

  for (const auto& t : adaptor.merge_targets) {
    Node& target = g.node(t);
    if (target.kind == NodeKind::Conv) {
      const auto& tp = g.preds(t);
      if (tp.size() != 1 || tp[0] != adaptor.id)
        throw_data("adaptor " + adaptor.id + " is not adjacent to " + t);
      target.params =
          merge_adjacent_linear(u, target.conv(), Adaptor::Side::Pre);
    } else if (target.kind == NodeKind::FC) {
      // The fc sees the adaptor's channels replicated over the remaining
      // spatial positions; a global pool on the way collapses them to one.
      // Flatten keeps the channel-major layout and changes nothing.
      auto shapes = g.infer_shapes();
      ShapeCHW at = shapes.at(adaptor.id);
      int64_t spatial = at.flat() ? 1 : at.h * at.w;
      std::string walk = g.succs(adaptor.id).at(0);
      while (walk != t) {
        const Node& w = g.node(walk);
        if (w.kind == NodeKind::GlobalAvgPool) {
          spatial = 1;
        } else if (w.kind != NodeKind::Flatten) {
          throw_data("nonlinearity between adaptor " + adaptor.id +
                     " and fc " + t);
        }
        auto s = g.succs(walk);
        if (s.size() != 1)
          throw_data("branching tail under adaptor " + adaptor.id);
        walk = s[0];
      }
      target.params = merge_into_fc(u, target.fc(), spatial);
    } else {
      throw_data("adaptor target " + t + " is neither Conv nor FC");
    }
  }
  splice_out(g, adaptor.id);
}

void merge_all_adaptors(ModelGraph& g, const std::vector<Adaptor>& adaptors) {
  std::vector<Adaptor> pending = adaptors;
  while (!pending.empty()) {
    bool progressed = false;
    for (auto it = pending.begin(); it != pending.end();) {
      bool ready = true;
      if (it->side == Adaptor::Side::Pre) {
        for (const auto& t : it->merge_targets) {
          if (g.node(t).kind == NodeKind::Conv) {
            const auto& tp = g.preds(t);
            if (tp.size() != 1 || tp[0] != it->id) ready = false;
          }
        }
      }
      if (ready) {
        merge_adaptor(g, *it);
        it = pending.erase(it);
        progressed = true;
      } else {
        ++it;
      }
    }
    if (!progressed)
      throw_internal("adaptor merge could not make progress");
  }
}

ConvSpec fold_bn(const ConvSpec& conv, const BNSpec& bn) {
  if (conv.out_channels() != bn.channels())
    throw_data("fold_bn: channel mismatch");
  ConvSpec folded = conv;
  const int64_t per = conv.weight.numel() / conv.out_channels();
  Tensor bias({conv.out_channels()}, 0.0f);
  for (int64_t c = 0; c < conv.out_channels(); ++c) {
    const float s = bn.gamma.data[c] /
                    std::sqrt(bn.running_var.data[c] + bn.epsilon);
    float* w = folded.weight.ptr() + c * per;
    for (int64_t j = 0; j < per; ++j) w[j] *= s;
    const float b0 = conv.bias ? conv.bias->data[c] : 0.0f;
    bias.data[c] = bn.beta.data[c] + s * (b0 - bn.running_mean.data[c]);
  }
  folded.bias = std::move(bias);
  return folded;
}

void fold_all_bn(ModelGraph& g) {
  std::vector<std::pair<std::string, std::string>> pairs;  // conv, bn
  for (const auto& id : g.topo_order()) {
    if (g.node(id).kind != NodeKind::BN) continue;
    const auto& preds = g.preds(id);
    if (preds.size() == 1 && g.node(preds[0]).kind == NodeKind::Conv &&
        g.succs(preds[0]).size() == 1)
      pairs.push_back({preds[0], id});
  }
  for (const auto& [conv_id, bn_id] : pairs) {
    g.node(conv_id).params =
        fold_bn(g.node(conv_id).conv(), g.node(bn_id).bn());
    splice_out(g, bn_id);
  }
}

void drop_block(ModelGraph& g, const BlockTag& tag) {
  std::vector<std::string> members;
  for (const auto& [id, t] : g.block_tags)
    if (t.stage == tag.stage && t.block == tag.block) members.push_back(id);
  if (members.empty())
    throw_data("no block tagged " + std::to_string(tag.stage) + "." +
               std::to_string(tag.block));
  const BlockTag actual = g.block_tags.at(members[0]);
  if (actual.role == BlockRole::First)
    throw_data("block " + std::to_string(tag.stage) + "." +
               std::to_string(tag.block) +
               " is the first block of its stage and cannot be dropped");

  std::set<std::string> inside(members.begin(), members.end());
  std::set<std::string> inputs;
  for (const auto& id : members)
    for (const auto& p : g.preds(id))
      if (!inside.count(p)) inputs.insert(p);
  std::set<std::string> outputs;  // member nodes consumed outside
  for (const auto& id : g.order()) {
    if (inside.count(id)) continue;
    for (const auto& p : g.preds(id))
      if (inside.count(p)) outputs.insert(p);
  }
  if (inputs.size() != 1 || outputs.size() != 1)
    throw_data("block " + std::to_string(tag.stage) + "." +
               std::to_string(tag.block) +
               " does not have a single input and output");
  const std::string input = *inputs.begin();
  const std::string output = *outputs.begin();

  auto shapes = g.infer_shapes();
  if (!(shapes.at(input) == shapes.at(output)))
    throw_data("cannot drop a block that changes its tensor shape");

  for (const auto& id : g.order()) {
    if (inside.count(id)) continue;
    for (const auto& p : g.preds(id))
      if (p == output) g.replace_pred(id, output, input);
  }
  for (const auto& id : members) g.remove_node(id);

  // Keep block numbering contiguous within the stage.
  for (auto& [id, t] : g.block_tags)
    if (t.stage == tag.stage && t.block > tag.block) t.block -= 1;

  auto violations = g.validate();
  if (!violations.empty())
    throw_data("graph invalid after block drop: " + violations[0].rule);
}

std::vector<int64_t> select_keep_channels(const ConvSpec& conv, int64_t n) {
  const int64_t co = conv.out_channels();
  if (n < 1 || n >= co)
    throw_data("keep count must be in [1, out_channels)");
  const int64_t per = conv.weight.numel() / co;
  std::vector<std::pair<double, int64_t>> norms(co);
  for (int64_t c = 0; c < co; ++c) {
    double s = 0.0;
    const float* w = conv.weight.ptr() + c * per;
    for (int64_t j = 0; j < per; ++j) s += std::fabs(w[j]);
    norms[c] = {s, c};
  }
  std::stable_sort(norms.begin(), norms.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first > b.first;
                     return a.second < b.second;
                   });
  std::vector<int64_t> keep;
  for (int64_t i = 0; i < n; ++i) keep.push_back(norms[i].second);
  std::sort(keep.begin(), keep.end());
  return keep;
}

void prune_channels(ModelGraph& g, const std::string& site,
                    const std::vector<int64_t>& keep) {
  ChainSite chain = analyze_chain_site(g, site);
  ConvSpec& p = g.node(site).conv();
  const int64_t c = p.out_channels();
  if (keep.empty()) throw_data("keep list must not be empty");
  for (size_t i = 0; i < keep.size(); ++i)
    if (keep[i] < 0 || keep[i] >= c || (i > 0 && keep[i] <= keep[i - 1]))
      throw_data("keep indices must be strictly increasing and in range");
  const int64_t n = static_cast<int64_t>(keep.size());

  auto shapes = g.infer_shapes();

  // Producer keeps rows.
  {
    const int64_t per = p.weight.numel() / c;
    Tensor w({n, p.weight.dim(1), p.weight.dim(2), p.weight.dim(3)});
    for (int64_t j = 0; j < n; ++j)
      std::copy_n(p.weight.ptr() + keep[j] * per, per, w.ptr() + j * per);
    p.weight = std::move(w);
    if (p.bias) {
      Tensor b({n});
      for (int64_t j = 0; j < n; ++j) b.data[j] = p.bias->data[keep[j]];
      p.bias = std::move(b);
    }
  }
  if (chain.bn) redim_bn(g, *chain.bn, keep);

  // Consumers keep input columns.
  for (const auto& consumer : chain.consumers) {
    Node& t = g.node(consumer.target);
    if (t.kind == NodeKind::Conv) {
      ConvSpec& spec = t.conv();
      const int64_t co = spec.out_channels();
      const int64_t khw = spec.kernel_h() * spec.kernel_w();
      Tensor w({co, n, spec.kernel_h(), spec.kernel_w()});
      for (int64_t o = 0; o < co; ++o)
        for (int64_t j = 0; j < n; ++j)
          std::copy_n(spec.weight.ptr() + (o * c + keep[j]) * khw, khw,
                      w.ptr() + (o * n + j) * khw);
      spec.weight = std::move(w);
    } else {
      FCSpec& spec = t.fc();
      const ShapeCHW before = shapes.at(consumer.from);
      const int64_t spatial = before.flat() ? 1 : before.h * before.w;
      const int64_t fo = spec.out_features();
      Tensor w({fo, n * spatial});
      for (int64_t k = 0; k < fo; ++k)
        for (int64_t j = 0; j < n; ++j)
          std::copy_n(spec.weight.ptr() + k * c * spatial + keep[j] * spatial,
                      spatial, w.ptr() + k * n * spatial + j * spatial);
      spec.weight = std::move(w);
    }
  }

  auto violations = g.validate();
  if (!violations.empty())
    throw_data("graph invalid after pruning: " + violations[0].rule);
}

Tensor compose_and_mask(const Tensor& w, const Tensor& u, const Tensor& mask) {
  if (w.rank() != 4) throw_data("compose_and_mask: weight must be 4-d");
  Tensor um = u;
  if (um.rank() == 4) {
    if (um.dim(2) != 1 || um.dim(3) != 1)
      throw_data("compose_and_mask: adaptor must be 1x1");
    um.shape = {um.dim(0), um.dim(1)};
  }
  const int64_t o = w.dim(0), c = w.dim(1), khw = w.dim(2) * w.dim(3);
  if (um.dim(0) != c)
    throw_data("compose_and_mask: adaptor does not compose with the weight");
  const int64_t i = um.dim(1);
  std::vector<int64_t> out_shape = {o, i, w.dim(2), w.dim(3)};
  if (mask.shape != out_shape)
    throw_data("compose_and_mask: mask shape mismatch");
  for (float v : mask.data)
    if (v != 0.0f && v != 1.0f)
      throw_data("compose_and_mask: mask entries must be 0 or 1");

  Tensor out(out_shape, 0.0f);
  for (int64_t oc = 0; oc < o; ++oc)
    for (int64_t ic = 0; ic < i; ++ic) {
      float* dst = out.ptr() + (oc * i + ic) * khw;
      for (int64_t ch = 0; ch < c; ++ch) {
        const float uv = um.data[ch * i + ic];
        if (uv == 0.0f) continue;
        const float* src = w.ptr() + (oc * c + ch) * khw;
        for (int64_t j = 0; j < khw; ++j) dst[j] += uv * src[j];
      }
      const float* m = mask.ptr() + (oc * i + ic) * khw;
      for (int64_t j = 0; j < khw; ++j) dst[j] *= m[j];
    }
  return out;
}

LowRankResult low_rank_decompose(const ConvSpec& conv,
                                 double energy_threshold) {
  if (energy_threshold <= 0.0 || energy_threshold > 1.0)
    throw_data("energy threshold must be in (0, 1]");
  if (conv.groups != 1)
    throw_data("low-rank decomposition requires groups == 1");
  const int64_t o = conv.out_channels();
  const int64_t k = conv.weight.numel() / o;  // in*kh*kw

  Eigen::MatrixXd a(o, k);
  for (int64_t r = 0; r < o; ++r)
    for (int64_t cidx = 0; cidx < k; ++cidx)
      a(r, cidx) = conv.weight.data[r * k + cidx];

  Eigen::BDCSVD<Eigen::MatrixXd> svd(a,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double total = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) total += sv(i) * sv(i);

  int64_t rank = 1;
  if (total > 0.0) {
    double cum = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      cum += sv(i) * sv(i);
      rank = i + 1;
      if (cum / total >= energy_threshold - 1e-12) break;
    }
  }

  double discarded = 0.0;
  for (Eigen::Index i = rank; i < sv.size(); ++i) discarded += sv(i) * sv(i);

  LowRankResult out;
  out.rank = rank;
  out.discarded_energy = discarded;

  out.spatial = conv;
  out.spatial.bias.reset();
  out.spatial.weight =
      Tensor({rank, conv.weight.dim(1), conv.kernel_h(), conv.kernel_w()});
  for (int64_t r = 0; r < rank; ++r)
    for (int64_t j = 0; j < k; ++j)
      out.spatial.weight.data[r * k + j] = static_cast<float>(svd.matrixV()(j, r));

  out.pointwise = ConvSpec{};
  out.pointwise.weight = Tensor({o, rank, 1, 1});
  for (int64_t r = 0; r < o; ++r)
    for (int64_t j = 0; j < rank; ++j)
      out.pointwise.weight.data[r * rank + j] =
          static_cast<float>(svd.matrixU()(r, j) * sv(j));
  out.pointwise.bias = conv.bias;
  out.pointwise.stride_h = out.pointwise.stride_w = 1;
  out.pointwise.pad_h = out.pointwise.pad_w = 0;
  out.pointwise.groups = 1;
  return out;
}

}  // namespace practise
