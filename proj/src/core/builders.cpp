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

#include "core/builders.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace practise {

Tensor init_uniform_fan_in(std::vector<int64_t> shape, int64_t fan_in,
                           uint64_t seed, const std::string& tag) {
  Rng rng(Rng::mix(seed, tag));
  float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

namespace {

// Incremental graph construction with a running tail node.
class Stacker {
 public:
  Stacker(ModelGraph& g, uint64_t seed) : g_(g), seed_(seed) {}

  std::string conv(const std::string& id, int64_t out, int64_t in, int64_t kh,
                   int64_t kw, int stride, int pad, bool bias, int groups = 1) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Conv;
    ConvSpec spec;
    spec.weight =
        init_uniform_fan_in({out, in / groups, kh, kw},
                            (in / groups) * kh * kw, seed_, id + ".weight");
    if (bias) spec.bias = Tensor({out}, 0.0f);
    spec.stride_h = spec.stride_w = stride;
    spec.pad_h = spec.pad_w = pad;
    spec.groups = groups;
    n.params = std::move(spec);
    return attach(std::move(n));
  }

  std::string bn(const std::string& id, int64_t c) {
    Node n;
    n.id = id;
    n.kind = NodeKind::BN;
    BNSpec spec;
    spec.gamma = Tensor::ones({c});
    spec.beta = Tensor::zeros({c});
    spec.running_mean = Tensor::zeros({c});
    spec.running_var = Tensor::ones({c});
    spec.epsilon = 1e-5f;
    n.params = std::move(spec);
    return attach(std::move(n));
  }

  std::string relu(const std::string& id, bool six = false) {
    Node n;
    n.id = id;
    n.kind = six ? NodeKind::ReLU6 : NodeKind::ReLU;
    return attach(std::move(n));
  }

  std::string maxpool(const std::string& id, int k, int stride, int pad) {
    Node n;
    n.id = id;
    n.kind = NodeKind::MaxPool;
    n.params = PoolSpec{k, k, stride, stride, pad, pad};
    return attach(std::move(n));
  }

  std::string add(const std::string& id, const std::string& a,
                  const std::string& b) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Add;
    g_.add_node(std::move(n), {a, b});
    tail_ = id;
    return id;
  }

  std::string gap(const std::string& id) {
    Node n;
    n.id = id;
    n.kind = NodeKind::GlobalAvgPool;
    return attach(std::move(n));
  }

  std::string flatten(const std::string& id) {
    Node n;
    n.id = id;
    n.kind = NodeKind::Flatten;
    return attach(std::move(n));
  }

  std::string fc(const std::string& id, int64_t out, int64_t in, bool bias) {
    Node n;
    n.id = id;
    n.kind = NodeKind::FC;
    FCSpec spec;
    spec.weight = init_uniform_fan_in({out, in}, in, seed_, id + ".weight");
    if (bias) spec.bias = Tensor({out}, 0.0f);
    n.params = std::move(spec);
    return attach(std::move(n));
  }

  std::string channel_pad(const std::string& id, int out_channels, int front) {
    Node n;
    n.id = id;
    n.kind = NodeKind::ChannelPad;
    n.params = PadSpec{out_channels, front};
    return attach(std::move(n));
  }

  void set_tail(const std::string& id) { tail_ = id; }
  const std::string& tail() const { return tail_; }

  void tag(const std::string& id, int stage, int block) {
    g_.block_tags[id] = BlockTag{
        stage, block, block == 1 ? BlockRole::First : BlockRole::Inner};
  }

 private:
  std::string attach(Node n) {
    const std::string id = n.id;
    if (tail_.empty())
      g_.add_node(std::move(n), {});
    else
      g_.add_node(std::move(n), {tail_});
    tail_ = id;
    return id;
  }

  ModelGraph& g_;
  uint64_t seed_;
  std::string tail_;
};

std::string block_prefix(int stage, int block) {
  return "s" + std::to_string(stage) + "b" + std::to_string(block);
}

// Basic (two 3x3) or bottleneck (1x1-3x3-1x1) residual block in the
// torchvision layout: stride sits on the 3x3, shortcut is a strided 1x1
// conv+BN when shape changes (or a pool+pad when parameter_free).
void residual_block(Stacker& st, int stage, int block, int64_t in_ch,
                    int64_t width, int expansion, int stride,
                    bool parameter_free_shortcut) {
  const std::string p = block_prefix(stage, block) + "_";
  const std::string input = st.tail();
  const int64_t out_ch = width * expansion;

  std::vector<std::string> ids;
  if (expansion == 1) {
    ids.push_back(st.conv(p + "conv1", width, in_ch, 3, 3, stride, 1, false));
    ids.push_back(st.bn(p + "bn1", width));
    ids.push_back(st.relu(p + "relu1"));
    ids.push_back(st.conv(p + "conv2", width, width, 3, 3, 1, 1, false));
    ids.push_back(st.bn(p + "bn2", width));
  } else {
    ids.push_back(st.conv(p + "conv1", width, in_ch, 1, 1, 1, 0, false));
    ids.push_back(st.bn(p + "bn1", width));
    ids.push_back(st.relu(p + "relu1"));
    ids.push_back(st.conv(p + "conv2", width, width, 3, 3, stride, 1, false));
    ids.push_back(st.bn(p + "bn2", width));
    ids.push_back(st.relu(p + "relu2"));
    ids.push_back(st.conv(p + "conv3", out_ch, width, 1, 1, 1, 0, false));
    ids.push_back(st.bn(p + "bn3", out_ch));
  }
  const std::string main_out = st.tail();

  std::string shortcut = input;
  if (stride != 1 || in_ch != out_ch) {
    st.set_tail(input);
    if (parameter_free_shortcut) {
      if (stride != 1)
        ids.push_back(st.maxpool(p + "short_pool", 1, stride, 0));
      if (in_ch != out_ch)
        ids.push_back(st.channel_pad(p + "short_pad",
                                     static_cast<int>(out_ch),
                                     static_cast<int>((out_ch - in_ch) / 2)));
    } else {
      ids.push_back(st.conv(p + "down", out_ch, in_ch, 1, 1, stride, 0, false));
      ids.push_back(st.bn(p + "downbn", out_ch));
    }
    shortcut = st.tail();
  }

  st.add(p + "add", main_out, shortcut);
  ids.push_back(p + "add");
  ids.push_back(st.relu(p + (expansion == 1 ? "relu2" : "relu3")));

  for (const auto& id : ids) st.tag(id, stage, block);
}

ModelGraph build_resnet(const std::vector<int>& layers,
                        const std::vector<int64_t>& widths, int expansion,
                        bool cifar, bool parameter_free_shortcut, int classes,
                        uint64_t seed) {
  ModelGraph g;
  g.input = cifar ? InputSpec{3, 32, 32} : InputSpec{3, 224, 224};
  Stacker st(g, seed);

  int64_t in_ch = widths[0];
  if (cifar) {
    st.conv("conv1", in_ch, 3, 3, 3, 1, 1, false);
    st.bn("bn1", in_ch);
    st.relu("relu1");
  } else {
    st.conv("conv1", in_ch, 3, 7, 7, 2, 3, false);
    st.bn("bn1", in_ch);
    st.relu("relu1");
    st.maxpool("maxpool", 3, 2, 1);
  }

  for (size_t s = 0; s < layers.size(); ++s) {
    const int64_t width = widths[s];
    for (int b = 1; b <= layers[s]; ++b) {
      int stride = (b == 1 && s > 0) ? 2 : 1;
      residual_block(st, static_cast<int>(s) + 1, b, in_ch, width, expansion,
                     stride, parameter_free_shortcut);
      in_ch = width * expansion;
    }
  }

  st.gap("gap");
  st.flatten("flatten");
  st.fc("fc", classes, in_ch, true);
  return g;
}

ModelGraph build_vgg16(bool cifar, uint64_t seed) {
  ModelGraph g;
  g.input = cifar ? InputSpec{3, 32, 32} : InputSpec{3, 224, 224};
  Stacker st(g, seed);

  const std::vector<std::pair<int64_t, int>> cfg = {
      {64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  int64_t in_ch = 3;
  for (size_t s = 0; s < cfg.size(); ++s) {
    const auto [width, count] = cfg[s];
    for (int c = 1; c <= count; ++c) {
      std::string p =
          "s" + std::to_string(s + 1) + "c" + std::to_string(c);
      st.conv(p, width, in_ch, 3, 3, 1, 1, true);
      st.tag(p, static_cast<int>(s) + 1, c);
      st.tag(st.bn(p + "_bn", width), static_cast<int>(s) + 1, c);
      st.tag(st.relu(p + "_relu"), static_cast<int>(s) + 1, c);
      in_ch = width;
    }
    st.maxpool("pool" + std::to_string(s + 1), 2, 2, 0);
  }

  st.flatten("flatten");
  if (cifar) {
    st.fc("fc1", 512, 512, true);
    st.relu("fc1_relu");
    st.fc("fc2", 10, 512, true);
  } else {
    st.fc("fc1", 4096, 512 * 7 * 7, true);
    st.relu("fc1_relu");
    st.fc("fc2", 4096, 4096, true);
    st.relu("fc2_relu");
    st.fc("fc3", 1000, 4096, true);
  }
  return g;
}

ModelGraph build_mobilenetv2(uint64_t seed) {
  ModelGraph g;
  g.input = {3, 224, 224};
  Stacker st(g, seed);

  st.conv("stem", 32, 3, 3, 3, 2, 1, false);
  st.bn("stembn", 32);
  st.relu("stemrelu", true);

  struct Setting {
    int expand, channels, repeats, stride;
  };
  const std::vector<Setting> settings = {{1, 16, 1, 1},  {6, 24, 2, 2},
                                         {6, 32, 3, 2},  {6, 64, 4, 2},
                                         {6, 96, 3, 1},  {6, 160, 3, 2},
                                         {6, 320, 1, 1}};
  int64_t in_ch = 32;
  for (size_t s = 0; s < settings.size(); ++s) {
    const Setting& cfg = settings[s];
    for (int b = 1; b <= cfg.repeats; ++b) {
      const int stride = b == 1 ? cfg.stride : 1;
      const int64_t hidden = in_ch * cfg.expand;
      const std::string p = block_prefix(static_cast<int>(s) + 1, b) + "_";
      const std::string input = st.tail();
      std::vector<std::string> ids;
      if (cfg.expand != 1) {
        ids.push_back(st.conv(p + "expand", hidden, in_ch, 1, 1, 1, 0, false));
        ids.push_back(st.bn(p + "expandbn", hidden));
        ids.push_back(st.relu(p + "expandrelu", true));
      }
      ids.push_back(st.conv(p + "dw", hidden, hidden, 3, 3, stride, 1, false,
                            static_cast<int>(hidden)));
      ids.push_back(st.bn(p + "dwbn", hidden));
      ids.push_back(st.relu(p + "dwrelu", true));
      ids.push_back(
          st.conv(p + "project", cfg.channels, hidden, 1, 1, 1, 0, false));
      ids.push_back(st.bn(p + "projectbn", cfg.channels));
      if (stride == 1 && in_ch == cfg.channels) {
        st.add(p + "add", st.tail(), input);
        ids.push_back(p + "add");
      }
      for (const auto& id : ids)
        st.tag(id, static_cast<int>(s) + 1, b);
      in_ch = cfg.channels;
    }
  }

  st.conv("head", 1280, 320, 1, 1, 1, 0, false);
  st.bn("headbn", 1280);
  st.relu("headrelu", true);
  st.gap("gap");
  st.flatten("flatten");
  st.fc("fc", 1000, 1280, true);
  return g;
}

}  // namespace

ModelGraph build_architecture(const std::string& name,
                              const std::string& variant, uint64_t seed) {
  const bool imagenet = variant == "imagenet";
  const bool cifar = variant == "cifar";
  if (!imagenet && !cifar)
    throw_config("unknown variant '" + variant + "' (imagenet or cifar)");

  if (name == "resnet34") {
    if (!imagenet) throw_config("resnet34 is only defined for imagenet");
    return build_resnet({3, 4, 6, 3}, {64, 128, 256, 512}, 1, false, false,
                        1000, seed);
  }
  if (name == "resnet50") {
    if (!imagenet) throw_config("resnet50 is only defined for imagenet");
    return build_resnet({3, 4, 6, 3}, {64, 128, 256, 512}, 4, false, false,
                        1000, seed);
  }
  if (name == "resnet56") {
    if (!cifar) throw_config("resnet56 is only defined for cifar");
    return build_resnet({9, 9, 9}, {16, 32, 64}, 1, true, true, 10, seed);
  }
  if (name == "vgg16") return build_vgg16(cifar, seed);
  if (name == "mobilenetv2") {
    if (!imagenet) throw_config("mobilenetv2 is only defined for imagenet");
    return build_mobilenetv2(seed);
  }
  throw_config("unknown architecture '" + name + "'");
}

ModelGraph build_toy_resnet(int blocks_per_stage, int width0, int classes,
                            uint64_t seed) {
  if (blocks_per_stage < 1 || width0 < 1)
    throw_config("toy resnet needs at least one block and one channel");
  std::vector<int> layers(3, blocks_per_stage);
  return build_resnet(layers, {width0, 2 * width0, 4 * width0}, 1, true,
                      false, classes, seed);
}

}  // namespace practise
