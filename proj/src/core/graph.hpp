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

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "core/tensor.hpp"

namespace practise {

enum class NodeKind {
  Conv,
  BN,
  ReLU,
  ReLU6,
  Add,
  MaxPool,
  GlobalAvgPool,
  FC,
  Flatten,
  ChannelPad,
};

const char* node_kind_name(NodeKind kind);
std::optional<NodeKind> node_kind_from_name(const std::string& name);

struct ConvSpec {
  Tensor weight;               // [out_ch, in_ch/groups, kH, kW]
  std::optional<Tensor> bias;  // [out_ch]
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
  int groups = 1;

  int64_t out_channels() const { return weight.dim(0); }
  int64_t in_channels() const { return weight.dim(1) * groups; }
  int64_t kernel_h() const { return weight.dim(2); }
  int64_t kernel_w() const { return weight.dim(3); }
};

struct BNSpec {
  Tensor gamma, beta, running_mean, running_var;  // all [C]
  float epsilon = 1e-5f;

  int64_t channels() const { return gamma.dim(0); }
};

struct FCSpec {
  Tensor weight;               // [out, in]
  std::optional<Tensor> bias;  // [out]

  int64_t out_features() const { return weight.dim(0); }
  int64_t in_features() const { return weight.dim(1); }
};

struct PoolSpec {
  int kernel_h = 2, kernel_w = 2;
  int stride_h = 2, stride_w = 2;
  int pad_h = 0, pad_w = 0;
};

// Zero channels inserted around the input: out_channels = front + in + back.
// Used by the parameter-free shortcuts of the CIFAR ResNets.
struct PadSpec {
  int out_channels = 0;
  int front = 0;
};

struct NoParams {};

using NodeParams =
    std::variant<NoParams, ConvSpec, BNSpec, FCSpec, PoolSpec, PadSpec>;

struct Node {
  std::string id;
  NodeKind kind = NodeKind::ReLU;
  NodeParams params;

  ConvSpec& conv() { return std::get<ConvSpec>(params); }
  const ConvSpec& conv() const { return std::get<ConvSpec>(params); }
  BNSpec& bn() { return std::get<BNSpec>(params); }
  const BNSpec& bn() const { return std::get<BNSpec>(params); }
  FCSpec& fc() { return std::get<FCSpec>(params); }
  const FCSpec& fc() const { return std::get<FCSpec>(params); }
  PoolSpec& pool() { return std::get<PoolSpec>(params); }
  const PoolSpec& pool() const { return std::get<PoolSpec>(params); }
  PadSpec& pad() { return std::get<PadSpec>(params); }
  const PadSpec& pad() const { return std::get<PadSpec>(params); }
};

enum class BlockRole { First, Inner };

struct BlockTag {
  int stage = 0;
  int block = 0;
  BlockRole role = BlockRole::Inner;

  bool operator==(const BlockTag&) const = default;
};

struct InputSpec {
  int64_t channels = 0, height = 0, width = 0;
};

enum class GraphMode { Train, Eval };

struct ShapeCHW {
  int64_t c = 0, h = 0, w = 0;  // h == w == 0 marks a flat vector of c values
  bool operator==(const ShapeCHW&) const = default;
  bool flat() const { return h == 0; }
};

struct Violation {
  std::string rule;
  std::string node;  // offending node id(s), comma separated; may be empty
  std::string detail;
};

// Feed-forward CNN graph. Nodes keep insertion order; predecessors are stored
// per node. Exactly one node has no predecessor (it consumes the input batch)
// and exactly one node has no successor (it produces the logits).
class ModelGraph {
 public:
  InputSpec input;
  GraphMode mode = GraphMode::Eval;

  Node& add_node(Node node, const std::vector<std::string>& preds);
  bool has_node(const std::string& id) const;
  Node& node(const std::string& id);
  const Node& node(const std::string& id) const;

  const std::vector<std::string>& order() const { return order_; }
  const std::vector<std::string>& preds(const std::string& id) const;
  std::vector<std::string> succs(const std::string& id) const;

  // Low-level rewiring for surgery. replace_pred swaps one predecessor slot;
  // remove_node drops the node and every edge touching it.
  void replace_pred(const std::string& id, const std::string& old_pred,
                    const std::string& new_pred);
  void remove_node(const std::string& id);

  std::map<std::string, BlockTag> block_tags;
  std::optional<BlockTag> tag_of(const std::string& id) const;

  // Topological order; throws if the edge relation has a cycle.
  std::vector<std::string> topo_order() const;

  // Output shape of every node at the graph input spec; throws on
  // structurally invalid graphs (validate() reports instead of throwing).
  std::map<std::string, ShapeCHW> infer_shapes() const;

  std::vector<Violation> validate() const;

  std::string entry() const;  // the unique node with no predecessors
  std::string sink() const;   // the unique node with no successors

  std::vector<std::string> conv_ids_in_order() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Node> nodes_;
  std::map<std::string, std::vector<std::string>> preds_;
};

struct CostReport {
  uint64_t params = 0;
  uint64_t macs = 0;
};

// params: weight+bias elements of Conv/BN/FC nodes (BN: gamma and beta).
// macs:   conv out_h*out_w*out_ch*(in_ch/groups)*kH*kW, fc in*out,
//         BN one per channel, everything else 0.
CostReport count_cost(const ModelGraph& graph);

}  // namespace practise
