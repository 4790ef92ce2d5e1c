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

#include "core/exec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "core/errors.hpp"

namespace practise {

Tensor& param_tensor(ModelGraph& g, const ParamKey& key) {
  Node& n = g.node(key.first);
  switch (key.second) {
    case ParamSlot::ConvWeight: return n.conv().weight;
    case ParamSlot::ConvBias:
      if (!n.conv().bias) throw_internal("conv has no bias: " + key.first);
      return *n.conv().bias;
    case ParamSlot::FCWeight: return n.fc().weight;
    case ParamSlot::FCBias:
      if (!n.fc().bias) throw_internal("fc has no bias: " + key.first);
      return *n.fc().bias;
    case ParamSlot::BNGamma: return n.bn().gamma;
    case ParamSlot::BNBeta: return n.bn().beta;
  }
  throw_internal("bad param slot");
}

const Tensor& param_tensor(const ModelGraph& g, const ParamKey& key) {
  return param_tensor(const_cast<ModelGraph&>(g), key);
}

namespace kernels {

void gemm(int64_t m, int64_t n, int64_t k, const float* a, const float* b,
          float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * m * n);
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// col layout: [C*kh*kw, outH*outW]
void im2col(const float* src, int64_t c, int64_t h, int64_t w, int64_t kh,
            int64_t kw, int64_t sh, int64_t sw, int64_t ph, int64_t pw,
            int64_t oh, int64_t ow, float* col) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        float* dst = col + ((ch * kh + ki) * kw + kj) * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          int64_t iy = oy * sh - ph + ki;
          float* drow = dst + oy * ow;
          if (iy < 0 || iy >= h) {
            std::memset(drow, 0, sizeof(float) * ow);
            continue;
          }
          const float* srow = src + (ch * h + iy) * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            int64_t ix = ox * sw - pw + kj;
            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, int64_t c, int64_t h, int64_t w, int64_t kh,
                int64_t kw, int64_t sh, int64_t sw, int64_t ph, int64_t pw,
                int64_t oh, int64_t ow, float* dst) {
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const float* srcrow = col + ((ch * kh + ki) * kw + kj) * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          int64_t iy = oy * sh - ph + ki;
          if (iy < 0 || iy >= h) continue;
          float* drow = dst + (ch * h + iy) * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            int64_t ix = ox * sw - pw + kj;
            if (ix >= 0 && ix < w) drow[ix] += srcrow[oy * ow + ox];
          }
        }
      }
    }
  }
}

static int64_t out_dim(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec) {
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                w = input.dim(3);
  const int64_t groups = spec.groups;
  const int64_t co = spec.out_channels(), cg = spec.weight.dim(1);
  const int64_t kh = spec.kernel_h(), kw = spec.kernel_w();
  if (c != spec.in_channels()) throw_internal("conv2d: channel mismatch");
  const int64_t oh = out_dim(h, kh, spec.stride_h, spec.pad_h);
  const int64_t ow = out_dim(w, kw, spec.stride_w, spec.pad_w);
  if (oh <= 0 || ow <= 0) throw_internal("conv2d: empty output");
  Tensor out({n, co, oh, ow});

  const int64_t k = cg * kh * kw;
  const int64_t p = oh * ow;
  const int64_t cog = co / groups;
  std::vector<float> col(static_cast<size_t>(k) * p);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t g = 0; g < groups; ++g) {
      const float* src = input.ptr() + (i * c + g * cg) * h * w;
      im2col(src, cg, h, w, kh, kw, spec.stride_h, spec.stride_w, spec.pad_h,
             spec.pad_w, oh, ow, col.data());
      gemm(cog, p, k, spec.weight.ptr() + g * cog * k, col.data(),
           out.ptr() + (i * co + g * cog) * p, false);
    }
    if (spec.bias) {
      for (int64_t ch = 0; ch < co; ++ch) {
        float b = spec.bias->data[ch];
        float* dst = out.ptr() + (i * co + ch) * p;
        for (int64_t j = 0; j < p; ++j) dst[j] += b;
      }
    }
  }
  return out;
}

}  // namespace kernels

namespace {

ShapeCHW batch_item_shape(const Tensor& t) {
  if (t.rank() == 4) return {t.dim(1), t.dim(2), t.dim(3)};
  if (t.rank() == 2) return {t.dim(1), 0, 0};
  throw_internal("activations must be [N,C,H,W] or [N,C]");
}

Tensor conv_backward_input(const Tensor& grad_out, const ConvSpec& spec,
                           const ShapeCHW& in_shape, int64_t batch) {
  const int64_t groups = spec.groups;
  const int64_t co = spec.out_channels(), cg = spec.weight.dim(1);
  const int64_t kh = spec.kernel_h(), kw = spec.kernel_w();
  const int64_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  const int64_t k = cg * kh * kw, p = oh * ow, cog = co / groups;

  Tensor grad_in({batch, in_shape.c, in_shape.h, in_shape.w}, 0.0f);
  // W^T laid out as [K, Cog] per group for contiguous gemm rows.
  std::vector<float> wt(static_cast<size_t>(groups) * k * cog);
  for (int64_t g = 0; g < groups; ++g) {
    const float* wsrc = spec.weight.ptr() + g * cog * k;
    float* wdst = wt.data() + g * k * cog;
    for (int64_t o = 0; o < cog; ++o)
      for (int64_t q = 0; q < k; ++q) wdst[q * cog + o] = wsrc[o * k + q];
  }
  std::vector<float> colgrad(static_cast<size_t>(k) * p);
  for (int64_t i = 0; i < batch; ++i) {
    for (int64_t g = 0; g < groups; ++g) {
      kernels::gemm(k, p, cog, wt.data() + g * k * cog,
                    grad_out.ptr() + (i * co + g * cog) * p, colgrad.data(),
                    false);
      float* dst = grad_in.ptr() + (i * in_shape.c + g * cg) * in_shape.h *
                                       in_shape.w;
      kernels::col2im_add(colgrad.data(), cg, in_shape.h, in_shape.w, kh, kw,
                          spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w,
                          oh, ow, dst);
    }
  }
  return grad_in;
}

void conv_backward_params(const Tensor& grad_out, const Tensor& input,
                          const ConvSpec& spec, Tensor* grad_w,
                          Tensor* grad_b) {
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                w = input.dim(3);
  const int64_t groups = spec.groups;
  const int64_t co = spec.out_channels(), cg = spec.weight.dim(1);
  const int64_t kh = spec.kernel_h(), kw = spec.kernel_w();
  const int64_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  const int64_t k = cg * kh * kw, p = oh * ow, cog = co / groups;

  if (grad_w) {
    grad_w->shape = spec.weight.shape;
    grad_w->data.assign(spec.weight.data.size(), 0.0f);
    std::vector<float> col(static_cast<size_t>(k) * p);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t g = 0; g < groups; ++g) {
        const float* src = input.ptr() + (i * c + g * cg) * h * w;
        kernels::im2col(src, cg, h, w, kh, kw, spec.stride_h, spec.stride_w,
                        spec.pad_h, spec.pad_w, oh, ow, col.data());
        // dW[o, q] += sum_j G[o, j] * col[q, j]
        const float* gptr = grad_out.ptr() + (i * co + g * cog) * p;
        float* wptr = grad_w->ptr() + g * cog * k;
        for (int64_t o = 0; o < cog; ++o) {
          const float* grow = gptr + o * p;
          for (int64_t q = 0; q < k; ++q) {
            const float* crow = col.data() + q * p;
            float acc = 0.0f;
            for (int64_t j = 0; j < p; ++j) acc += grow[j] * crow[j];
            wptr[o * k + q] += acc;
          }
        }
      }
    }
  }
  if (grad_b && spec.bias) {
    grad_b->shape = {co};
    grad_b->data.assign(static_cast<size_t>(co), 0.0f);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t ch = 0; ch < co; ++ch) {
        const float* g = grad_out.ptr() + (i * co + ch) * p;
        float acc = 0.0f;
        for (int64_t j = 0; j < p; ++j) acc += g[j];
        grad_b->data[ch] += acc;
      }
  }
}

}  // namespace

void apply_bn_updates(ModelGraph& g, const BNBatchStats& stats,
                      float momentum) {
  for (const auto& [id, entry] : stats.stats) {
    BNSpec& bn = g.node(id).bn();
    const int64_t n = entry.count;
    float var_scale = n > 1 ? static_cast<float>(n) / (n - 1) : 1.0f;
    for (int64_t c = 0; c < bn.channels(); ++c) {
      bn.running_mean.data[c] = (1.0f - momentum) * bn.running_mean.data[c] +
                                momentum * entry.mean.data[c];
      bn.running_var.data[c] = (1.0f - momentum) * bn.running_var.data[c] +
                               momentum * entry.var.data[c] * var_scale;
    }
  }
}

ForwardResult Executor::forward(const ModelGraph& g, const Tensor& batch,
                                const ForwardOptions& opts,
                                BNBatchStats* stats_out) {
  if (batch.rank() != 4) throw_data("forward: batch must be [N,C,H,W]");
  if (batch.dim(1) != g.input.channels || batch.dim(2) != g.input.height ||
      batch.dim(3) != g.input.width)
    throw_data("forward: batch shape does not match the graph input spec");
  for (const auto& t : opts.taps)
    if (!g.has_node(t)) throw_data("forward: unknown tap id " + t);

  outputs_.clear();
  pool_argmax_.clear();
  bn_batch_.clear();
  bn_batch_mode_.clear();
  has_state_ = opts.keep_state;
  if (opts.keep_state) batch_ = batch;

  const auto order = g.topo_order();
  const int64_t n = batch.dim(0);

  // Optional restriction to the ancestors of selected nodes.
  std::set<std::string> active;
  if (!opts.restrict_to.empty()) {
    std::vector<std::string> stack = opts.restrict_to;
    for (const auto& t : opts.taps) stack.push_back(t);
    while (!stack.empty()) {
      std::string id = stack.back();
      stack.pop_back();
      if (!active.insert(id).second) continue;
      for (const auto& p : g.preds(id)) stack.push_back(p);
    }
  }

  // Remaining-use counts let us free dead activations when not training.
  std::map<std::string, int> uses;
  for (const auto& id : order)
    for (const auto& p : g.preds(id)) uses[p]++;
  std::set<std::string> keep(opts.taps.begin(), opts.taps.end());

  for (const auto& id : order) {
    if (!active.empty() && !active.count(id)) continue;
    const Node& node = g.node(id);
    const auto& preds = g.preds(id);
    const Tensor& in = preds.empty() ? batch : outputs_.at(preds.at(0));
    Tensor out;
    switch (node.kind) {
      case NodeKind::Conv:
        out = kernels::conv2d(in, node.conv());
        break;
      case NodeKind::BN: {
        const BNSpec& bn = node.bn();
        const int64_t c = bn.channels(), hw = in.dim(2) * in.dim(3);
        bool batch_mode =
            opts.all_bn_batch_stats || opts.batch_stat_bn.count(id) > 0;
        out = Tensor(in.shape);
        if (batch_mode) {
          Tensor mean({c}, 0.0f), var({c}, 0.0f);
          const int64_t cnt = n * hw;
          for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
              const float* src = in.ptr() + (i * c + ch) * hw;
              float acc = 0.0f;
              for (int64_t j = 0; j < hw; ++j) acc += src[j];
              mean.data[ch] += acc;
            }
          for (int64_t ch = 0; ch < c; ++ch) mean.data[ch] /= cnt;
          for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
              const float* src = in.ptr() + (i * c + ch) * hw;
              float m = mean.data[ch], acc = 0.0f;
              for (int64_t j = 0; j < hw; ++j) {
                float d = src[j] - m;
                acc += d * d;
              }
              var.data[ch] += acc;
            }
          for (int64_t ch = 0; ch < c; ++ch) var.data[ch] /= cnt;
          for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
              const float* src = in.ptr() + (i * c + ch) * hw;
              float* dst = out.ptr() + (i * c + ch) * hw;
              float inv = 1.0f / std::sqrt(var.data[ch] + bn.epsilon);
              float scale = bn.gamma.data[ch] * inv;
              float shift =
                  bn.beta.data[ch] - scale * mean.data[ch];
              for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] * scale + shift;
            }
          if (stats_out) stats_out->stats[id] = {mean, var, cnt};
          if (opts.keep_state) {
            bn_batch_[id] = {std::move(mean), std::move(var)};
            bn_batch_mode_.insert(id);
          }
        } else {
          for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
              const float* src = in.ptr() + (i * c + ch) * hw;
              float* dst = out.ptr() + (i * c + ch) * hw;
              float inv =
                  1.0f / std::sqrt(bn.running_var.data[ch] + bn.epsilon);
              float scale = bn.gamma.data[ch] * inv;
              float shift =
                  bn.beta.data[ch] - scale * bn.running_mean.data[ch];
              for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] * scale + shift;
            }
        }
        break;
      }
      case NodeKind::ReLU: {
        out = in;
        for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
        break;
      }
      case NodeKind::ReLU6: {
        out = in;
        for (float& v : out.data) v = std::min(std::max(v, 0.0f), 6.0f);
        break;
      }
      case NodeKind::Add: {
        const Tensor& a = outputs_.at(preds.at(0));
        const Tensor& b = outputs_.at(preds.at(1));
        if (!a.same_shape(b)) throw_internal("add shape mismatch at " + id);
        out = a;
        for (size_t j = 0; j < out.data.size(); ++j) out.data[j] += b.data[j];
        break;
      }
      case NodeKind::MaxPool: {
        const PoolSpec& p = node.pool();
        const int64_t c = in.dim(1), h = in.dim(2), w = in.dim(3);
        const int64_t oh = (h + 2 * p.pad_h - p.kernel_h) / p.stride_h + 1;
        const int64_t ow = (w + 2 * p.pad_w - p.kernel_w) / p.stride_w + 1;
        out = Tensor({n, c, oh, ow});
        std::vector<int32_t>* amax = nullptr;
        if (opts.keep_state) {
          pool_argmax_[id].assign(static_cast<size_t>(n) * c * oh * ow, -1);
          amax = &pool_argmax_[id];
        }
        for (int64_t i = 0; i < n; ++i)
          for (int64_t ch = 0; ch < c; ++ch) {
            const float* src = in.ptr() + (i * c + ch) * h * w;
            float* dst = out.ptr() + (i * c + ch) * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy)
              for (int64_t ox = 0; ox < ow; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                int32_t best_idx = -1;
                for (int64_t ki = 0; ki < p.kernel_h; ++ki) {
                  int64_t iy = oy * p.stride_h - p.pad_h + ki;
                  if (iy < 0 || iy >= h) continue;
                  for (int64_t kj = 0; kj < p.kernel_w; ++kj) {
                    int64_t ix = ox * p.stride_w - p.pad_w + kj;
                    if (ix < 0 || ix >= w) continue;
                    float v = src[iy * w + ix];
                    if (v > best) {
                      best = v;
                      best_idx = static_cast<int32_t>(iy * w + ix);
                    }
                  }
                }
                dst[oy * ow + ox] = best;
                if (amax)
                  (*amax)[((i * c + ch) * oh + oy) * ow + ox] = best_idx;
              }
          }
        break;
      }
      case NodeKind::GlobalAvgPool: {
        const int64_t c = in.dim(1), hw = in.dim(2) * in.dim(3);
        out = Tensor({n, c, 1, 1});
        for (int64_t i = 0; i < n; ++i)
          for (int64_t ch = 0; ch < c; ++ch) {
            const float* src = in.ptr() + (i * c + ch) * hw;
            float acc = 0.0f;
            for (int64_t j = 0; j < hw; ++j) acc += src[j];
            out.data[i * c + ch] = acc / hw;
          }
        break;
      }
      case NodeKind::FC: {
        const FCSpec& f = node.fc();
        const int64_t in_f = f.in_features(), out_f = f.out_features();
        if (in.numel() != n * in_f) throw_internal("fc feature mismatch at " + id);
        out = Tensor({n, out_f});
        for (int64_t i = 0; i < n; ++i) {
          const float* x = in.ptr() + i * in_f;
          float* y = out.ptr() + i * out_f;
          for (int64_t o = 0; o < out_f; ++o) {
            const float* wrow = f.weight.ptr() + o * in_f;
            float acc = f.bias ? f.bias->data[o] : 0.0f;
            for (int64_t j = 0; j < in_f; ++j) acc += wrow[j] * x[j];
            y[o] = acc;
          }
        }
        break;
      }
      case NodeKind::Flatten: {
        out = in;
        out.shape = {n, in.numel() / n};
        break;
      }
      case NodeKind::ChannelPad: {
        const PadSpec& p = node.pad();
        const int64_t c = in.dim(1), h = in.dim(2), w = in.dim(3);
        out = Tensor({n, p.out_channels, h, w}, 0.0f);
        for (int64_t i = 0; i < n; ++i)
          std::memcpy(out.ptr() + (i * p.out_channels + p.front) * h * w,
                      in.ptr() + i * c * h * w, sizeof(float) * c * h * w);
        break;
      }
    }
    outputs_[id] = std::move(out);

    if (!opts.keep_state) {
      for (const auto& p : preds) {
        if (--uses[p] == 0 && !keep.count(p)) outputs_.erase(p);
      }
    }
  }

  ForwardResult result;
  const std::string sink = g.sink();
  if (auto it = outputs_.find(sink); it != outputs_.end())
    result.logits = it->second;
  for (const auto& t : opts.taps) result.taps[t] = outputs_.at(t);
  if (!opts.keep_state) outputs_.clear();
  return result;
}

const Tensor& Executor::output_of(const std::string& id) const {
  auto it = outputs_.find(id);
  if (it == outputs_.end()) throw_internal("no cached output for " + id);
  return it->second;
}

std::map<std::string, Tensor> Executor::backward(
    const ModelGraph& g, const std::map<std::string, Tensor>& seeds,
    const std::set<ParamKey>& wanted, std::map<ParamKey, Tensor>& grads_out) {
  if (!has_state_) throw_internal("backward requires a kept forward state");

  // Nodes whose output gradient is needed: on a path from a wanted-parameter
  // node to a seeded node.
  std::set<std::string> param_nodes;
  for (const auto& k : wanted) param_nodes.insert(k.first);
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& id : g.order())
    for (const auto& p : g.preds(id)) succ[p].push_back(id);

  std::set<std::string> desc;  // descendants-or-self of parameter nodes
  {
    std::vector<std::string> stack(param_nodes.begin(), param_nodes.end());
    while (!stack.empty()) {
      std::string id = stack.back();
      stack.pop_back();
      if (!desc.insert(id).second) continue;
      for (const auto& s : succ[id]) stack.push_back(s);
    }
  }
  std::set<std::string> anc;  // ancestors-or-self of seeded nodes
  {
    std::vector<std::string> stack;
    for (const auto& [id, t] : seeds) stack.push_back(id);
    while (!stack.empty()) {
      std::string id = stack.back();
      stack.pop_back();
      if (!anc.insert(id).second) continue;
      for (const auto& p : g.preds(id)) stack.push_back(p);
    }
  }
  std::set<std::string> need;
  for (const auto& id : desc)
    if (anc.count(id)) need.insert(id);

  std::map<std::string, Tensor> out_grads;
  for (const auto& [id, t] : seeds) {
    if (!t.same_shape(outputs_.at(id)))
      throw_internal("seed gradient shape mismatch at " + id);
    if (need.count(id)) out_grads[id] = t;
  }

  auto accumulate = [&](const std::string& id, Tensor grad) {
    auto it = out_grads.find(id);
    if (it == out_grads.end()) {
      out_grads.emplace(id, std::move(grad));
    } else {
      Tensor& acc = it->second;
      for (size_t j = 0; j < acc.data.size(); ++j)
        acc.data[j] += grad.data[j];
    }
  };

  const auto order = g.topo_order();
  std::map<std::string, Tensor> input_grads;  // returned for test support

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::string& id = *it;
    if (!need.count(id)) continue;
    auto git = out_grads.find(id);
    if (git == out_grads.end()) continue;  // no path contributed
    const Tensor& grad = git->second;
    const Node& node = g.node(id);
    const auto& preds = g.preds(id);
    const Tensor& in = preds.empty() ? batch_ : outputs_.at(preds.at(0));
    const int64_t n = grad.dim(0);

    auto want = [&](ParamSlot slot) {
      return wanted.count({id, slot}) > 0;
    };
    auto push = [&](const std::string& pred, Tensor t) {
      if (pred.empty()) {
        input_grads[id] = std::move(t);
      } else if (need.count(pred)) {
        accumulate(pred, std::move(t));
      }
    };
    const std::string pred0 = preds.empty() ? std::string() : preds.at(0);
    const bool need_input_grad =
        preds.empty() ? false : need.count(pred0) > 0;

    switch (node.kind) {
      case NodeKind::Conv: {
        const ConvSpec& c = node.conv();
        Tensor gw, gb;
        if (want(ParamSlot::ConvWeight) || want(ParamSlot::ConvBias)) {
          conv_backward_params(grad, in, c,
                               want(ParamSlot::ConvWeight) ? &gw : nullptr,
                               want(ParamSlot::ConvBias) ? &gb : nullptr);
          if (!gw.empty()) grads_out[{id, ParamSlot::ConvWeight}] = std::move(gw);
          if (!gb.empty()) grads_out[{id, ParamSlot::ConvBias}] = std::move(gb);
        }
        if (need_input_grad) {
          ShapeCHW ish = batch_item_shape(in);
          push(pred0, conv_backward_input(grad, c, ish, n));
        }
        break;
      }
      case NodeKind::BN: {
        const BNSpec& bn = node.bn();
        const int64_t c = bn.channels(), hw = in.dim(2) * in.dim(3);
        const bool batch_mode = bn_batch_mode_.count(id) > 0;
        const Tensor& mean =
            batch_mode ? bn_batch_.at(id).first : bn.running_mean;
        const Tensor& var =
            batch_mode ? bn_batch_.at(id).second : bn.running_var;
        Tensor* ggamma = nullptr;
        Tensor* gbeta = nullptr;
        if (want(ParamSlot::BNGamma)) {
          grads_out[{id, ParamSlot::BNGamma}] = Tensor({c}, 0.0f);
          ggamma = &grads_out[{id, ParamSlot::BNGamma}];
        }
        if (want(ParamSlot::BNBeta)) {
          grads_out[{id, ParamSlot::BNBeta}] = Tensor({c}, 0.0f);
          gbeta = &grads_out[{id, ParamSlot::BNBeta}];
        }
        Tensor gin;
        if (need_input_grad) gin = Tensor(in.shape);
        const int64_t cnt = n * hw;
        for (int64_t ch = 0; ch < c; ++ch) {
          const float m = mean.data[ch];
          const float inv = 1.0f / std::sqrt(var.data[ch] + bn.epsilon);
          const float gamma = bn.gamma.data[ch];
          // Reductions over the channel slice.
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int64_t i = 0; i < n; ++i) {
            const float* gy = grad.ptr() + (i * c + ch) * hw;
            const float* x = in.ptr() + (i * c + ch) * hw;
            for (int64_t j = 0; j < hw; ++j) {
              sum_dy += gy[j];
              sum_dy_xhat += gy[j] * (x[j] - m) * inv;
            }
          }
          if (ggamma) ggamma->data[ch] = static_cast<float>(sum_dy_xhat);
          if (gbeta) gbeta->data[ch] = static_cast<float>(sum_dy);
          if (need_input_grad) {
            if (batch_mode) {
              const float k1 = static_cast<float>(sum_dy / cnt);
              const float k2 = static_cast<float>(sum_dy_xhat / cnt);
              for (int64_t i = 0; i < n; ++i) {
                const float* gy = grad.ptr() + (i * c + ch) * hw;
                const float* x = in.ptr() + (i * c + ch) * hw;
                float* gx = gin.ptr() + (i * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                  float xhat = (x[j] - m) * inv;
                  gx[j] = gamma * inv * (gy[j] - k1 - xhat * k2);
                }
              }
            } else {
              const float scale = gamma * inv;
              for (int64_t i = 0; i < n; ++i) {
                const float* gy = grad.ptr() + (i * c + ch) * hw;
                float* gx = gin.ptr() + (i * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) gx[j] = gy[j] * scale;
              }
            }
          }
        }
        if (need_input_grad) push(pred0, std::move(gin));
        break;
      }
      case NodeKind::ReLU:
      case NodeKind::ReLU6: {
        if (need_input_grad) {
          const Tensor& out = outputs_.at(id);
          Tensor gin = grad;
          if (node.kind == NodeKind::ReLU) {
            for (size_t j = 0; j < gin.data.size(); ++j)
              if (out.data[j] <= 0.0f) gin.data[j] = 0.0f;
          } else {
            for (size_t j = 0; j < gin.data.size(); ++j)
              if (out.data[j] <= 0.0f || out.data[j] >= 6.0f)
                gin.data[j] = 0.0f;
          }
          push(pred0, std::move(gin));
        }
        break;
      }
      case NodeKind::Add: {
        for (const auto& p : preds)
          if (need.count(p)) accumulate(p, grad);
        break;
      }
      case NodeKind::MaxPool: {
        if (need_input_grad) {
          const auto& amax = pool_argmax_.at(id);
          const int64_t c = in.dim(1), hw = in.dim(2) * in.dim(3);
          const int64_t ohw = grad.dim(2) * grad.dim(3);
          Tensor gin(in.shape, 0.0f);
          for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
              const float* gy = grad.ptr() + (i * c + ch) * ohw;
              float* gx = gin.ptr() + (i * c + ch) * hw;
              const int32_t* am = amax.data() + (i * c + ch) * ohw;
              for (int64_t j = 0; j < ohw; ++j)
                if (am[j] >= 0) gx[am[j]] += gy[j];
            }
          push(pred0, std::move(gin));
        }
        break;
      }
      case NodeKind::GlobalAvgPool: {
        if (need_input_grad) {
          const int64_t c = in.dim(1), hw = in.dim(2) * in.dim(3);
          Tensor gin(in.shape);
          for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch) {
              float gv = grad.data[i * c + ch] / hw;
              float* gx = gin.ptr() + (i * c + ch) * hw;
              for (int64_t j = 0; j < hw; ++j) gx[j] = gv;
            }
          push(pred0, std::move(gin));
        }
        break;
      }
      case NodeKind::FC: {
        const FCSpec& f = node.fc();
        const int64_t in_f = f.in_features(), out_f = f.out_features();
        if (want(ParamSlot::FCWeight)) {
          Tensor gw(f.weight.shape, 0.0f);
          for (int64_t i = 0; i < n; ++i) {
            const float* x = in.ptr() + i * in_f;
            const float* gy = grad.ptr() + i * out_f;
            for (int64_t o = 0; o < out_f; ++o) {
              float gv = gy[o];
              if (gv == 0.0f) continue;
              float* wrow = gw.ptr() + o * in_f;
              for (int64_t j = 0; j < in_f; ++j) wrow[j] += gv * x[j];
            }
          }
          grads_out[{id, ParamSlot::FCWeight}] = std::move(gw);
        }
        if (want(ParamSlot::FCBias) && f.bias) {
          Tensor gb({out_f}, 0.0f);
          for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < out_f; ++o)
              gb.data[o] += grad.data[i * out_f + o];
          grads_out[{id, ParamSlot::FCBias}] = std::move(gb);
        }
        if (need_input_grad) {
          Tensor gin(in.shape, 0.0f);
          for (int64_t i = 0; i < n; ++i) {
            const float* gy = grad.ptr() + i * out_f;
            float* gx = gin.ptr() + i * in_f;
            for (int64_t o = 0; o < out_f; ++o) {
              float gv = gy[o];
              if (gv == 0.0f) continue;
              const float* wrow = f.weight.ptr() + o * in_f;
              for (int64_t j = 0; j < in_f; ++j) gx[j] += gv * wrow[j];
            }
          }
          push(pred0, std::move(gin));
        }
        break;
      }
      case NodeKind::Flatten: {
        if (need_input_grad) {
          Tensor gin = grad;
          gin.shape = in.shape;
          push(pred0, std::move(gin));
        }
        break;
      }
      case NodeKind::ChannelPad: {
        if (need_input_grad) {
          const PadSpec& p = node.pad();
          const int64_t c = in.dim(1), h = in.dim(2), w = in.dim(3);
          Tensor gin(in.shape);
          for (int64_t i = 0; i < n; ++i)
            std::memcpy(gin.ptr() + i * c * h * w,
                        grad.ptr() + (i * p.out_channels + p.front) * h * w,
                        sizeof(float) * c * h * w);
          push(pred0, std::move(gin));
        }
        break;
      }
    }
  }
  return input_grads;
}

ForwardResult forward_eval(const ModelGraph& g, const Tensor& batch,
                           const std::vector<std::string>& taps) {
  Executor ex;
  ForwardOptions opts;
  opts.taps = taps;
  return ex.forward(g, batch, opts);
}

}  // namespace practise
