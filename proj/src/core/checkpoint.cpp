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

#include "core/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/errors.hpp"

namespace practise {

namespace fs = std::filesystem;

namespace {

void write_blob(const fs::path& path, const Tensor& t) {
  if (!t.all_finite())
    throw_data("checkpoint tensor has non-finite values: " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("cannot write " + path.string());
  // Little-endian float32; this matches the in-memory layout on the
  // platforms we build for.
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw_data("short write to " + path.string());
}

Tensor read_blob(const fs::path& path, std::vector<int64_t> shape) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw_data("missing tensor blob " + path.string());
  const auto bytes = static_cast<size_t>(in.tellg());
  const int64_t want = shape_numel(shape);
  if (bytes != static_cast<size_t>(want) * sizeof(float)) {
    std::ostringstream os;
    os << "tensor blob length mismatch for " << path.string() << ": have "
       << bytes << " bytes, manifest declares " << want << " elements";
    throw_data(os.str());
  }
  Tensor t(std::move(shape));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw_data("short read from " + path.string());
  if (!t.all_finite())
    throw_data("checkpoint tensor has non-finite values: " + path.string());
  return t;
}

std::string shape_str(const Tensor& t) {
  std::string s;
  for (int64_t d : t.shape) s += " " + std::to_string(d);
  return s;
}

std::string hexfloat(float v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", static_cast<double>(v));
  return buf;
}

}  // namespace

void save_checkpoint(const ModelGraph& graph, const fs::path& dir) {
  auto violations = graph.validate();
  if (!violations.empty())
    throw_data("refusing to save an invalid graph (" + violations[0].rule +
               " at '" + violations[0].node + "')");
  fs::create_directories(dir);
  std::ofstream m(dir / "manifest.txt");
  if (!m) throw_data("cannot write manifest in " + dir.string());

  m << "practise checkpoint\n";
  m << "version " << kCheckpointVersion << "\n";
  m << "input " << graph.input.channels << " " << graph.input.height << " "
    << graph.input.width << "\n";
  m << "mode " << (graph.mode == GraphMode::Train ? "train" : "eval") << "\n";

  auto blob = [&](const std::string& node, const char* slot, const Tensor& t) {
    write_blob(dir / (node + "." + slot + ".bin"), t);
  };

  // Topological order normalizes insertion order after surgery and lets the
  // loader rebuild in a single pass.
  const auto order = graph.topo_order();
  for (const auto& id : order) {
    const Node& n = graph.node(id);
    m << "node " << id << " " << node_kind_name(n.kind);
    switch (n.kind) {
      case NodeKind::Conv: {
        const auto& c = n.conv();
        m << " stride " << c.stride_h << " " << c.stride_w << " pad "
          << c.pad_h << " " << c.pad_w << " groups " << c.groups << " bias "
          << (c.bias ? 1 : 0) << " weight" << shape_str(c.weight);
        blob(id, "weight", c.weight);
        if (c.bias) blob(id, "bias", *c.bias);
        break;
      }
      case NodeKind::BN: {
        const auto& b = n.bn();
        m << " channels " << b.channels() << " eps " << hexfloat(b.epsilon);
        blob(id, "gamma", b.gamma);
        blob(id, "beta", b.beta);
        blob(id, "mean", b.running_mean);
        blob(id, "var", b.running_var);
        break;
      }
      case NodeKind::FC: {
        const auto& f = n.fc();
        m << " out " << f.out_features() << " in " << f.in_features()
          << " bias " << (f.bias ? 1 : 0);
        blob(id, "weight", f.weight);
        if (f.bias) blob(id, "bias", *f.bias);
        break;
      }
      case NodeKind::MaxPool: {
        const auto& p = n.pool();
        m << " kernel " << p.kernel_h << " " << p.kernel_w << " stride "
          << p.stride_h << " " << p.stride_w << " pad " << p.pad_h << " "
          << p.pad_w;
        break;
      }
      case NodeKind::ChannelPad:
        m << " out " << n.pad().out_channels << " front " << n.pad().front;
        break;
      default:
        break;
    }
    m << "\n";
  }
  for (const auto& id : order)
    for (const auto& p : graph.preds(id)) m << "edge " << p << " " << id << "\n";
  for (const auto& [id, tag] : graph.block_tags)
    m << "tag " << id << " " << tag.stage << " " << tag.block << " "
      << (tag.role == BlockRole::First ? "first" : "inner") << "\n";
  m << "end\n";
  if (!m) throw_data("short write to manifest in " + dir.string());
}

namespace {

int64_t parse_i64(std::istringstream& is, const std::string& what) {
  int64_t v;
  if (!(is >> v)) throw_data("manifest: expected integer for " + what);
  return v;
}

void expect_word(std::istringstream& is, const std::string& word) {
  std::string w;
  if (!(is >> w) || w != word)
    throw_data("manifest: expected '" + word + "', got '" + w + "'");
}

}  // namespace

ModelGraph load_checkpoint(const fs::path& dir) {
  std::ifstream m(dir / "manifest.txt");
  if (!m) throw_data("missing manifest in " + dir.string());

  std::string line;
  if (!std::getline(m, line) || line != "practise checkpoint")
    throw_data("not a practise checkpoint: " + dir.string());
  if (!std::getline(m, line)) throw_data("truncated manifest");
  {
    std::istringstream is(line);
    expect_word(is, "version");
    int64_t v = parse_i64(is, "version");
    if (v != kCheckpointVersion)
      throw_data("unsupported checkpoint version " + std::to_string(v) +
                 " (this build reads version " +
                 std::to_string(kCheckpointVersion) + ")");
  }

  ModelGraph g;
  struct Edge {
    std::string from, to;
  };
  std::vector<Edge> edges;
  std::vector<Node> nodes;
  bool saw_end = false;

  while (std::getline(m, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string word;
    is >> word;
    if (word == "end") {
      saw_end = true;
      break;
    } else if (word == "input") {
      g.input.channels = parse_i64(is, "input channels");
      g.input.height = parse_i64(is, "input height");
      g.input.width = parse_i64(is, "input width");
    } else if (word == "mode") {
      std::string mode;
      is >> mode;
      if (mode == "train")
        g.mode = GraphMode::Train;
      else if (mode == "eval")
        g.mode = GraphMode::Eval;
      else
        throw_data("manifest: unknown mode " + mode);
    } else if (word == "node") {
      Node n;
      std::string kind;
      if (!(is >> n.id >> kind)) throw_data("manifest: bad node line");
      auto k = node_kind_from_name(kind);
      if (!k) throw_data("manifest: unknown node kind " + kind);
      n.kind = *k;
      switch (n.kind) {
        case NodeKind::Conv: {
          ConvSpec c;
          expect_word(is, "stride");
          c.stride_h = static_cast<int>(parse_i64(is, "stride"));
          c.stride_w = static_cast<int>(parse_i64(is, "stride"));
          expect_word(is, "pad");
          c.pad_h = static_cast<int>(parse_i64(is, "pad"));
          c.pad_w = static_cast<int>(parse_i64(is, "pad"));
          expect_word(is, "groups");
          c.groups = static_cast<int>(parse_i64(is, "groups"));
          expect_word(is, "bias");
          bool has_bias = parse_i64(is, "bias") != 0;
          expect_word(is, "weight");
          std::vector<int64_t> shape(4);
          for (auto& d : shape) d = parse_i64(is, "weight shape");
          c.weight = read_blob(dir / (n.id + ".weight.bin"), shape);
          if (has_bias)
            c.bias = read_blob(dir / (n.id + ".bias.bin"), {shape[0]});
          n.params = std::move(c);
          break;
        }
        case NodeKind::BN: {
          BNSpec b;
          expect_word(is, "channels");
          int64_t c = parse_i64(is, "channels");
          expect_word(is, "eps");
          std::string eps;
          is >> eps;
          b.epsilon = std::strtof(eps.c_str(), nullptr);
          b.gamma = read_blob(dir / (n.id + ".gamma.bin"), {c});
          b.beta = read_blob(dir / (n.id + ".beta.bin"), {c});
          b.running_mean = read_blob(dir / (n.id + ".mean.bin"), {c});
          b.running_var = read_blob(dir / (n.id + ".var.bin"), {c});
          n.params = std::move(b);
          break;
        }
        case NodeKind::FC: {
          expect_word(is, "out");
          int64_t out = parse_i64(is, "out");
          expect_word(is, "in");
          int64_t in = parse_i64(is, "in");
          expect_word(is, "bias");
          bool has_bias = parse_i64(is, "bias") != 0;
          FCSpec f;
          f.weight = read_blob(dir / (n.id + ".weight.bin"), {out, in});
          if (has_bias) f.bias = read_blob(dir / (n.id + ".bias.bin"), {out});
          n.params = std::move(f);
          break;
        }
        case NodeKind::MaxPool: {
          PoolSpec p;
          expect_word(is, "kernel");
          p.kernel_h = static_cast<int>(parse_i64(is, "kernel"));
          p.kernel_w = static_cast<int>(parse_i64(is, "kernel"));
          expect_word(is, "stride");
          p.stride_h = static_cast<int>(parse_i64(is, "stride"));
          p.stride_w = static_cast<int>(parse_i64(is, "stride"));
          expect_word(is, "pad");
          p.pad_h = static_cast<int>(parse_i64(is, "pad"));
          p.pad_w = static_cast<int>(parse_i64(is, "pad"));
          n.params = p;
          break;
        }
        case NodeKind::ChannelPad: {
          PadSpec p;
          expect_word(is, "out");
          p.out_channels = static_cast<int>(parse_i64(is, "out"));
          expect_word(is, "front");
          p.front = static_cast<int>(parse_i64(is, "front"));
          n.params = p;
          break;
        }
        default:
          break;
      }
      nodes.push_back(std::move(n));
    } else if (word == "edge") {
      Edge e;
      if (!(is >> e.from >> e.to)) throw_data("manifest: bad edge line");
      edges.push_back(std::move(e));
    } else if (word == "tag") {
      std::string id, role;
      BlockTag tag;
      if (!(is >> id >> tag.stage >> tag.block >> role))
        throw_data("manifest: bad tag line");
      tag.role = role == "first" ? BlockRole::First : BlockRole::Inner;
      g.block_tags[id] = tag;
    } else {
      throw_data("manifest: unknown directive " + word);
    }
  }
  if (!saw_end) throw_data("manifest missing end marker (truncated?)");

  std::map<std::string, std::vector<std::string>> preds;
  for (const auto& e : edges) preds[e.to].push_back(e.from);
  // Nodes appear in original insertion order and edges only reference
  // earlier nodes, so a single pass can rebuild the graph.
  for (auto& n : nodes) {
    auto id = n.id;
    g.add_node(std::move(n), preds.count(id) ? preds[id]
                                             : std::vector<std::string>{});
  }
  auto violations = g.validate();
  if (!violations.empty())
    throw_data("loaded graph is invalid (" + violations[0].rule + " at '" +
               violations[0].node + "')");
  return g;
}

}  // namespace practise
