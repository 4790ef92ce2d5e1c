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

#include "core/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

#include "core/errors.hpp"

namespace practise {

const char* node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Conv: return "Conv";
    case NodeKind::BN: return "BN";
    case NodeKind::ReLU: return "ReLU";
    case NodeKind::ReLU6: return "ReLU6";
    case NodeKind::Add: return "Add";
    case NodeKind::MaxPool: return "MaxPool";
    case NodeKind::GlobalAvgPool: return "GlobalAvgPool";
    case NodeKind::FC: return "FC";
    case NodeKind::Flatten: return "Flatten";
    case NodeKind::ChannelPad: return "ChannelPad";
  }
  return "?";
}

std::optional<NodeKind> node_kind_from_name(const std::string& name) {
  static const std::map<std::string, NodeKind> table = {
      {"Conv", NodeKind::Conv},
      {"BN", NodeKind::BN},
      {"ReLU", NodeKind::ReLU},
      {"ReLU6", NodeKind::ReLU6},
      {"Add", NodeKind::Add},
      {"MaxPool", NodeKind::MaxPool},
      {"GlobalAvgPool", NodeKind::GlobalAvgPool},
      {"FC", NodeKind::FC},
      {"Flatten", NodeKind::Flatten},
      {"ChannelPad", NodeKind::ChannelPad},
  };
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

Node& ModelGraph::add_node(Node node, const std::vector<std::string>& preds) {
  if (node.id.empty()) throw_internal("node id must not be empty");
  if (nodes_.count(node.id))
    throw_internal("duplicate node id: " + node.id);
  for (const auto& p : preds)
    if (!nodes_.count(p))
      throw_internal("unknown predecessor '" + p + "' for node " + node.id);
  const std::string id = node.id;
  nodes_.emplace(id, std::move(node));
  preds_[id] = preds;
  order_.push_back(id);
  return nodes_.at(id);
}

bool ModelGraph::has_node(const std::string& id) const {
  return nodes_.count(id) > 0;
}

Node& ModelGraph::node(const std::string& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw_internal("unknown node id: " + id);
  return it->second;
}

const Node& ModelGraph::node(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw_internal("unknown node id: " + id);
  return it->second;
}

const std::vector<std::string>& ModelGraph::preds(const std::string& id) const {
  auto it = preds_.find(id);
  if (it == preds_.end()) throw_internal("unknown node id: " + id);
  return it->second;
}

std::vector<std::string> ModelGraph::succs(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& nid : order_) {
    const auto& ps = preds_.at(nid);
    if (std::find(ps.begin(), ps.end(), id) != ps.end()) out.push_back(nid);
  }
  return out;
}

void ModelGraph::replace_pred(const std::string& id, const std::string& old_pred,
                              const std::string& new_pred) {
  auto& ps = preds_.at(id);
  bool found = false;
  for (auto& p : ps) {
    if (p == old_pred) {
      p = new_pred;
      found = true;
    }
  }
  if (!found)
    throw_internal("replace_pred: " + old_pred + " is not a predecessor of " + id);
}

void ModelGraph::remove_node(const std::string& id) {
  if (!nodes_.count(id)) throw_internal("remove_node: unknown id " + id);
  nodes_.erase(id);
  preds_.erase(id);
  order_.erase(std::remove(order_.begin(), order_.end(), id), order_.end());
  block_tags.erase(id);
  for (auto& [nid, ps] : preds_)
    ps.erase(std::remove(ps.begin(), ps.end(), id), ps.end());
}

std::optional<BlockTag> ModelGraph::tag_of(const std::string& id) const {
  auto it = block_tags.find(id);
  if (it == block_tags.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ModelGraph::topo_order() const {
  std::map<std::string, int> in_degree;
  for (const auto& id : order_) in_degree[id] = static_cast<int>(preds_.at(id).size());
  // Stable: seeds and expansions follow insertion order.
  std::deque<std::string> ready;
  for (const auto& id : order_)
    if (in_degree[id] == 0) ready.push_back(id);
  std::vector<std::string> out;
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& id : order_)
    for (const auto& p : preds_.at(id)) succ[p].push_back(id);
  while (!ready.empty()) {
    std::string id = ready.front();
    ready.pop_front();
    out.push_back(id);
    for (const auto& s : succ[id])
      if (--in_degree[s] == 0) ready.push_back(s);
  }
  if (out.size() != order_.size())
    throw_internal("graph contains a cycle");
  return out;
}

std::string ModelGraph::entry() const {
  std::string found;
  for (const auto& id : order_) {
    if (preds_.at(id).empty()) {
      if (!found.empty()) throw_internal("graph has multiple entry nodes");
      found = id;
    }
  }
  if (found.empty()) throw_internal("graph has no entry node");
  return found;
}

std::string ModelGraph::sink() const {
  std::set<std::string> has_succ;
  for (const auto& id : order_)
    for (const auto& p : preds_.at(id)) has_succ.insert(p);
  std::string found;
  for (const auto& id : order_) {
    if (!has_succ.count(id)) {
      if (!found.empty()) throw_internal("graph has multiple sink nodes");
      found = id;
    }
  }
  if (found.empty()) throw_internal("graph has no sink node");
  return found;
}

std::vector<std::string> ModelGraph::conv_ids_in_order() const {
  std::vector<std::string> out;
  for (const auto& id : topo_order())
    if (node(id).kind == NodeKind::Conv) out.push_back(id);
  return out;
}

namespace {

int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

ShapeCHW node_output_shape(const Node& n, const std::vector<ShapeCHW>& ins) {
  switch (n.kind) {
    case NodeKind::Conv: {
      const auto& c = n.conv();
      const ShapeCHW& in = ins.at(0);
      if (in.flat()) throw_internal("conv on flat input: " + n.id);
      if (in.c != c.in_channels())
        throw_internal("conv input channel mismatch at " + n.id);
      return {c.out_channels(),
              conv_out_dim(in.h, c.kernel_h(), c.stride_h, c.pad_h),
              conv_out_dim(in.w, c.kernel_w(), c.stride_w, c.pad_w)};
    }
    case NodeKind::BN: {
      const ShapeCHW& in = ins.at(0);
      if (in.c != n.bn().channels())
        throw_internal("bn channel mismatch at " + n.id);
      return in;
    }
    case NodeKind::ReLU:
    case NodeKind::ReLU6:
      return ins.at(0);
    case NodeKind::Add: {
      if (ins.at(0) != ins.at(1))
        throw_internal("add input shape mismatch at " + n.id);
      return ins.at(0);
    }
    case NodeKind::MaxPool: {
      const auto& p = n.pool();
      const ShapeCHW& in = ins.at(0);
      if (in.flat()) throw_internal("pool on flat input: " + n.id);
      return {in.c, conv_out_dim(in.h, p.kernel_h, p.stride_h, p.pad_h),
              conv_out_dim(in.w, p.kernel_w, p.stride_w, p.pad_w)};
    }
    case NodeKind::GlobalAvgPool: {
      const ShapeCHW& in = ins.at(0);
      if (in.flat()) throw_internal("pool on flat input: " + n.id);
      return {in.c, 1, 1};
    }
    case NodeKind::FC: {
      const ShapeCHW& in = ins.at(0);
      int64_t features = in.flat() ? in.c : in.c * in.h * in.w;
      if (features != n.fc().in_features())
        throw_internal("fc input feature mismatch at " + n.id);
      return {n.fc().out_features(), 0, 0};
    }
    case NodeKind::Flatten: {
      const ShapeCHW& in = ins.at(0);
      return {in.flat() ? in.c : in.c * in.h * in.w, 0, 0};
    }
    case NodeKind::ChannelPad: {
      const auto& p = n.pad();
      const ShapeCHW& in = ins.at(0);
      if (p.out_channels < in.c + p.front)
        throw_internal("channel pad narrower than input at " + n.id);
      return {p.out_channels, in.h, in.w};
    }
  }
  throw_internal("unhandled node kind");
}

}  // namespace

std::map<std::string, ShapeCHW> ModelGraph::infer_shapes() const {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0)
    throw_internal("graph input spec is not set");
  std::map<std::string, ShapeCHW> shapes;
  ShapeCHW in_shape{input.channels, input.height, input.width};
  for (const auto& id : topo_order()) {
    const Node& n = node(id);
    std::vector<ShapeCHW> ins;
    for (const auto& p : preds_.at(id)) ins.push_back(shapes.at(p));
    if (ins.empty()) ins.push_back(in_shape);
    shapes[id] = node_output_shape(n, ins);
  }
  return shapes;
}

namespace {

size_t expected_arity(NodeKind kind) {
  return kind == NodeKind::Add ? 2 : 1;
}

}  // namespace

std::vector<Violation> ModelGraph::validate() const {
  std::vector<Violation> out;
  if (order_.empty()) {
    out.push_back({"nonempty", "", "graph has no nodes"});
    return out;
  }

  // Arity. The entry node consumes the batch, so zero predecessors are
  // allowed for exactly one non-Add node.
  int entries = 0;
  for (const auto& id : order_) {
    const Node& n = node(id);
    size_t want = expected_arity(n.kind);
    size_t got = preds_.at(id).size();
    if (got == 0 && n.kind != NodeKind::Add) {
      ++entries;
      continue;
    }
    if (got != want) {
      std::ostringstream os;
      os << node_kind_name(n.kind) << " expects " << want
         << " predecessor(s), has " << got;
      out.push_back({"arity", id, os.str()});
    }
  }
  if (entries != 1)
    out.push_back({"single-source", "",
                   "expected exactly one entry node, found " +
                       std::to_string(entries)});

  // Single sink.
  std::set<std::string> has_succ;
  for (const auto& id : order_)
    for (const auto& p : preds_.at(id)) has_succ.insert(p);
  std::vector<std::string> sinks;
  for (const auto& id : order_)
    if (!has_succ.count(id)) sinks.push_back(id);
  if (sinks.size() != 1) {
    std::string joined;
    for (const auto& s : sinks) joined += (joined.empty() ? "" : ",") + s;
    out.push_back({"single-sink", joined,
                   "expected exactly one sink node, found " +
                       std::to_string(sinks.size())});
  }

  // Acyclicity.
  try {
    topo_order();
  } catch (const Error&) {
    out.push_back({"acyclic", "", "edge relation contains a cycle"});
    return out;  // shape inference would not terminate meaningfully
  }

  // Parameter sanity.
  for (const auto& id : order_) {
    const Node& n = node(id);
    if (n.kind == NodeKind::Conv) {
      const auto& c = n.conv();
      if (c.weight.rank() != 4)
        out.push_back({"conv-weight-rank", id, "weight must be 4-d"});
      else {
        if (c.groups < 1 || c.out_channels() % c.groups != 0)
          out.push_back({"conv-groups", id, "out_ch must divide by groups"});
        if (c.stride_h < 1 || c.stride_w < 1 || c.pad_h < 0 || c.pad_w < 0 ||
            c.kernel_h() < 1 || c.kernel_w() < 1)
          out.push_back({"conv-geometry", id, "bad stride/pad/kernel"});
        if (c.bias && c.bias->numel() != c.out_channels())
          out.push_back({"conv-bias", id, "bias length != out channels"});
      }
    } else if (n.kind == NodeKind::BN) {
      const auto& b = n.bn();
      int64_t c = b.gamma.numel();
      if (b.beta.numel() != c || b.running_mean.numel() != c ||
          b.running_var.numel() != c)
        out.push_back({"bn-lengths", id, "bn vectors must share length"});
      if (b.epsilon <= 0.0f)
        out.push_back({"bn-epsilon", id, "epsilon must be positive"});
      for (float v : b.running_var.data)
        if (v < 0.0f) {
          out.push_back({"bn-variance", id, "running_var has negative entry"});
          break;
        }
    }
  }

  // Shape/channel compatibility across edges, including Add agreement.
  if (input.channels > 0) {
    try {
      infer_shapes();
    } catch (const Error& e) {
      out.push_back({"channel-compat", "", e.what()});
    }
  }

  // Block tags: stage blocks contiguous from 1, role first iff block == 1.
  std::map<int, std::set<int>> stage_blocks;
  for (const auto& [id, tag] : block_tags) {
    if (!nodes_.count(id)) {
      out.push_back({"tag-node", id, "tag references unknown node"});
      continue;
    }
    if (tag.stage < 1 || tag.block < 1)
      out.push_back({"tag-range", id, "stage and block start at 1"});
    stage_blocks[tag.stage].insert(tag.block);
    bool first = tag.role == BlockRole::First;
    if (first != (tag.block == 1))
      out.push_back({"tag-role", id, "role=first iff block index is 1"});
  }
  for (const auto& [stage, blocks] : stage_blocks) {
    int expect = 1;
    for (int b : blocks) {
      if (b != expect) {
        out.push_back({"tag-contiguous", "",
                       "stage " + std::to_string(stage) +
                           " block indices must be contiguous from 1"});
        break;
      }
      ++expect;
    }
  }

  return out;
}

CostReport count_cost(const ModelGraph& graph) {
  auto shapes = graph.infer_shapes();  // throws on invalid graphs
  CostReport r;
  for (const auto& id : graph.order()) {
    const Node& n = graph.node(id);
    switch (n.kind) {
      case NodeKind::Conv: {
        const auto& c = n.conv();
        r.params += static_cast<uint64_t>(c.weight.numel());
        if (c.bias) r.params += static_cast<uint64_t>(c.bias->numel());
        const ShapeCHW& os = shapes.at(id);
        r.macs += static_cast<uint64_t>(os.h) * os.w * c.out_channels() *
                  (c.in_channels() / c.groups) * c.kernel_h() * c.kernel_w();
        break;
      }
      case NodeKind::BN:
        r.params += static_cast<uint64_t>(n.bn().gamma.numel() +
                                          n.bn().beta.numel());
        // One multiply-accumulate per channel, matching the reference
        // accounting the zoo tables are calibrated against.
        r.macs += static_cast<uint64_t>(n.bn().channels());
        break;
      case NodeKind::FC: {
        const auto& f = n.fc();
        r.params += static_cast<uint64_t>(f.weight.numel());
        if (f.bias) r.params += static_cast<uint64_t>(f.bias->numel());
        r.macs += static_cast<uint64_t>(f.in_features()) * f.out_features();
        break;
      }
      default:
        break;
    }
  }
  return r;
}

}  // namespace practise
