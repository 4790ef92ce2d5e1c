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

#include "core/recovery.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "core/errors.hpp"
#include "core/exec.hpp"
#include "core/rng.hpp"
#include "core/surgery.hpp"

namespace practise {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct AdamState {
  Tensor m, v;
  int64_t step = 0;
};

void adam_step(Tensor& w, const Tensor& grad, AdamState& state, float lr) {
  constexpr float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  if (state.m.empty()) {
    state.m = Tensor(w.shape, 0.0f);
    state.v = Tensor(w.shape, 0.0f);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < w.data.size(); ++i) {
    const float g = grad.data[i];
    state.m.data[i] = beta1 * state.m.data[i] + (1.0f - beta1) * g;
    state.v.data[i] = beta2 * state.v.data[i] + (1.0f - beta2) * g * g;
    const float mhat = static_cast<float>(state.m.data[i] / bc1);
    const float vhat = static_cast<float>(state.v.data[i] / bc2);
    w.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

std::vector<std::vector<int64_t>> make_batches(int64_t count,
                                               int64_t batch_size,
                                               Rng* shuffle_rng) {
  std::vector<int64_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_rng) {
    for (int64_t i = count - 1; i > 0; --i) {
      int64_t j = static_cast<int64_t>(shuffle_rng->next_below(i + 1));
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<int64_t>> batches;
  for (int64_t at = 0; at < count; at += batch_size) {
    int64_t end = std::min(count, at + batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

// Snapshot of everything a mimic job may change.
struct JobState {
  std::map<std::string, Tensor> adaptor_weights;
  std::map<std::string, BNSpec> bn;
  std::vector<Tensor> masked_u;
};

JobState snapshot_job(const MimicJob& job) {
  JobState s;
  for (const auto& id : job.trainable)
    s.adaptor_weights[id] = job.student->node(id).conv().weight;
  for (const auto& id : job.site_bn) s.bn[id] = job.student->node(id).bn();
  for (const auto& m : job.masked) s.masked_u.push_back(m.u);
  return s;
}

void restore_job(MimicJob& job, const JobState& s) {
  for (const auto& [id, w] : s.adaptor_weights)
    job.student->node(id).conv().weight = w;
  for (const auto& [id, bn] : s.bn) job.student->node(id).bn() = bn;
  for (size_t i = 0; i < job.masked.size(); ++i)
    job.masked[i].u = s.masked_u[i];
}

void materialize_masked(const MimicJob& job) {
  for (const auto& m : job.masked)
    job.student->node(m.conv).conv().weight =
        compose_and_mask(m.base, m.u, m.mask);
}

void check_job(const MimicJob& job, const TinySet& data) {
  if (!job.teacher || !job.student) throw_internal("mimic job is incomplete");
  if (data.size() == 0) throw_data("mimic training needs a non-empty tiny set");
  if (job.taps.empty()) throw_internal("mimic job has no taps");
  auto ts = job.teacher->infer_shapes();
  auto ss = job.student->infer_shapes();
  for (const auto& [t, s] : job.taps) {
    if (!ts.count(t)) throw_data("teacher tap does not exist: " + t);
    if (!ss.count(s)) throw_data("student tap does not exist: " + s);
    if (!(ts.at(t) == ss.at(s)))
      throw_data("tap shape mismatch between teacher " + t + " and student " +
                 s);
  }
}

std::vector<std::string> unique_ids(
    const std::vector<std::pair<std::string, std::string>>& taps, bool first) {
  std::set<std::string> ids;
  for (const auto& [t, s] : taps) ids.insert(first ? t : s);
  return {ids.begin(), ids.end()};
}

// Sum over taps of per-tap mean squared error; optionally emits the loss
// gradients w.r.t. the student tap activations.
double tap_loss(const MimicJob& job,
                const std::map<std::string, Tensor>& teacher_taps,
                const std::map<std::string, Tensor>& student_taps,
                std::map<std::string, Tensor>* seeds) {
  double total = 0.0;
  for (const auto& [tid, sid] : job.taps) {
    const Tensor& t = teacher_taps.at(tid);
    const Tensor& s = student_taps.at(sid);
    if (!t.same_shape(s)) throw_internal("tap shape mismatch at runtime");
    const double inv = 1.0 / static_cast<double>(s.numel());
    double acc = 0.0;
    Tensor* seed = nullptr;
    if (seeds) {
      auto [it, fresh] = seeds->try_emplace(sid, Tensor(s.shape, 0.0f));
      (void)fresh;
      seed = &it->second;
    }
    for (int64_t i = 0; i < s.numel(); ++i) {
      const double d = static_cast<double>(s.data[i]) - t.data[i];
      acc += d * d;
      if (seed) seed->data[i] += static_cast<float>(2.0 * d * inv);
    }
    total += acc * inv;
  }
  return total;
}

// d(loss)/dU for the masked composition W_eff = (base * U) .* M given the
// loss gradient G w.r.t. W_eff:
//   dU[ch, ic] = sum_{oc, j} G[oc, ic, j] M[oc, ic, j] base[oc, ch, j]
Tensor masked_u_grad(const MaskedSite& site, const Tensor& g_eff) {
  const int64_t o = site.base.dim(0), c = site.base.dim(1);
  const int64_t khw = site.base.dim(2) * site.base.dim(3);
  const int64_t i = site.u.dim(1);
  Tensor gu(site.u.shape, 0.0f);
  std::vector<float> gm(khw);
  for (int64_t oc = 0; oc < o; ++oc) {
    for (int64_t ic = 0; ic < i; ++ic) {
      const float* grow = g_eff.ptr() + (oc * i + ic) * khw;
      const float* mrow = site.mask.ptr() + (oc * i + ic) * khw;
      bool any = false;
      for (int64_t j = 0; j < khw; ++j) {
        gm[j] = grow[j] * mrow[j];
        any |= gm[j] != 0.0f;
      }
      if (!any) continue;
      for (int64_t ch = 0; ch < c; ++ch) {
        const float* brow = site.base.ptr() + (oc * c + ch) * khw;
        double acc = 0.0;
        for (int64_t j = 0; j < khw; ++j) acc += gm[j] * brow[j];
        gu.data[ch * i + ic] += static_cast<float>(acc);
      }
    }
  }
  return gu;
}

}  // namespace

double mimic_eval_loss(const MimicJob& job, const TinySet& data,
                       int64_t batch_size) {
  materialize_masked(job);
  const auto t_ids = unique_ids(job.taps, true);
  const auto s_ids = unique_ids(job.taps, false);
  const int64_t count = static_cast<int64_t>(data.size());
  auto batches =
      make_batches(count, std::min<int64_t>(batch_size, count), nullptr);
  double total = 0.0;
  Executor tex, sex;
  for (const auto& batch : batches) {
    Tensor x = stack_batch(data, batch);
    ForwardOptions topts;
    topts.taps = t_ids;
    topts.restrict_to = t_ids;
    auto tr = tex.forward(*job.teacher, x, topts);
    ForwardOptions sopts;
    sopts.taps = s_ids;
    sopts.restrict_to = s_ids;
    auto sr = sex.forward(*job.student, x, sopts);
    total += tap_loss(job, tr.taps, sr.taps, nullptr) *
             static_cast<double>(batch.size());
  }
  return total / count;
}

TrainResult train_adaptors(MimicJob& job, const TinySet& data,
                           const MimicConfig& cfg) {
  const auto start = Clock::now();
  check_job(job, data);
  const int64_t count = static_cast<int64_t>(data.size());
  const int64_t batch_size = std::min<int64_t>(cfg.batch_size, count);

  TrainResult result;
  result.loss_trace.push_back(mimic_eval_loss(job, data, batch_size));
  result.initial_loss = result.loss_trace[0];

  JobState best_state = snapshot_job(job);
  double best = result.loss_trace[0];
  int64_t bad_epochs = 0;

  const auto t_ids = unique_ids(job.taps, true);
  const auto s_ids = unique_ids(job.taps, false);

  // Without augmentation the teacher activations are constant per image;
  // compute them once and gather per batch.
  std::map<std::string, Tensor> teacher_cache;
  if (cfg.augment == AugmentPolicy::None) {
    Executor tex;
    ForwardOptions topts;
    topts.taps = t_ids;
    topts.restrict_to = t_ids;
    for (const auto& batch : make_batches(count, batch_size, nullptr)) {
      auto tr = tex.forward(*job.teacher, stack_batch(data, batch), topts);
      for (const auto& id : t_ids) {
        const Tensor& part = tr.taps.at(id);
        Tensor& slab = teacher_cache[id];
        if (slab.empty()) {
          auto shape = part.shape;
          shape[0] = count;
          slab = Tensor(shape);
        }
        const int64_t per = part.numel() / part.dim(0);
        for (size_t i = 0; i < batch.size(); ++i)
          std::copy_n(part.ptr() + i * per, per, slab.ptr() + batch[i] * per);
      }
    }
  }

  std::set<ParamKey> wanted;
  for (const auto& id : job.trainable)
    wanted.insert({id, ParamSlot::ConvWeight});
  for (const auto& m : job.masked)
    wanted.insert({m.conv, ParamSlot::ConvWeight});

  std::map<std::string, AdamState> adam;
  std::vector<AdamState> adam_masked(job.masked.size());

  for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)));
    auto batches = make_batches(count, batch_size, &shuffle);
    double epoch_loss = 0.0;

    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      Tensor x = stack_batch(data, batch);
      if (cfg.augment != AugmentPolicy::None) {
        uint64_t aug_seed = Rng::mix(
            cfg.seed, "aug" + std::to_string(epoch) + "_" + std::to_string(b));
        x = augment_batch(x, cfg.augment, aug_seed);
      }

      std::map<std::string, Tensor> t_taps;
      if (cfg.augment == AugmentPolicy::None) {
        for (const auto& id : t_ids) {
          const Tensor& slab = teacher_cache.at(id);
          auto shape = slab.shape;
          shape[0] = static_cast<int64_t>(batch.size());
          Tensor part(shape);
          const int64_t per = slab.numel() / slab.dim(0);
          for (size_t i = 0; i < batch.size(); ++i)
            std::copy_n(slab.ptr() + batch[i] * per, per, part.ptr() + i * per);
          t_taps[id] = std::move(part);
        }
      } else {
        Executor tex;
        ForwardOptions topts;
        topts.taps = t_ids;
        topts.restrict_to = t_ids;
        t_taps = tex.forward(*job.teacher, x, topts).taps;
      }

      materialize_masked(job);
      Executor sex;
      ForwardOptions sopts;
      sopts.taps = s_ids;
      sopts.restrict_to = s_ids;
      sopts.keep_state = true;
      sopts.batch_stat_bn = {job.site_bn.begin(), job.site_bn.end()};
      sopts.all_bn_batch_stats = cfg.update_all_bn_stats;
      BNBatchStats stats;
      auto sr = sex.forward(*job.student, x, sopts, &stats);

      std::map<std::string, Tensor> seeds;
      const double loss = tap_loss(job, t_taps, sr.taps, &seeds);
      epoch_loss += loss * static_cast<double>(batch.size());

      std::map<ParamKey, Tensor> grads;
      sex.backward(*job.student, seeds, wanted, grads);

      for (const auto& id : job.trainable) {
        auto it = grads.find({id, ParamSlot::ConvWeight});
        if (it == grads.end()) continue;
        adam_step(job.student->node(id).conv().weight, it->second, adam[id],
                  cfg.learning_rate);
      }
      for (size_t mi = 0; mi < job.masked.size(); ++mi) {
        MaskedSite& site = job.masked[mi];
        auto it = grads.find({site.conv, ParamSlot::ConvWeight});
        if (it == grads.end()) continue;
        Tensor gu = masked_u_grad(site, it->second);
        adam_step(site.u, gu, adam_masked[mi], cfg.learning_rate);
      }
      apply_bn_updates(*job.student, stats, 0.1f);
    }

    result.loss_trace.push_back(epoch_loss / count);
    result.epochs_run = epoch;
    if (result.loss_trace.back() < best) {
      best = result.loss_trace.back();
      best_state = snapshot_job(job);
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) break;
    }
  }

  restore_job(job, best_state);
  materialize_masked(job);
  result.final_loss = best;
  result.seconds = seconds_since(start);
  return result;
}

std::string PractiseReport::to_text() const {
  std::ostringstream os;
  os << "practise recovery report\n";
  for (const auto& s : sites)
    os << "site " << s.site << " epochs " << s.epochs << " initial "
       << s.initial_loss << " best " << s.best_loss << " seconds " << s.seconds
       << "\n";
  os << "total_seconds " << seconds << "\n";
  return os.str();
}

ModelGraph run_practise(const ModelGraph& teacher, const CompressionPlan& plan,
                        const TinySet& data, const MimicConfig& cfg,
                        int64_t freeze_front_k, PractiseReport* report) {
  const auto start = Clock::now();
  validate_plan(plan, teacher);
  if (data.size() == 0) throw_data("recovery needs a non-empty tiny set");
  ModelGraph student = teacher;
  int64_t site_index = 0;

  auto run_site = [&](const std::string& label, MimicJob& job) {
    SiteReport r;
    r.site = label;
    const bool frozen = site_index < freeze_front_k;
    if (!frozen) {
      MimicConfig site_cfg = cfg;
      site_cfg.seed = Rng::mix(cfg.seed, label);
      TrainResult tr = train_adaptors(job, data, site_cfg);
      r.epochs = tr.epochs_run;
      r.initial_loss = tr.initial_loss;
      r.best_loss = tr.final_loss;
      r.seconds = tr.seconds;
    } else {
      materialize_masked(job);
    }
    ++site_index;
    if (report) report->sites.push_back(r);
  };

  switch (plan.scheme) {
    case CompressionPlan::Scheme::BlockDrop: {
      // Stage by stage, front to back.
      auto blocks = plan.blocks;
      std::sort(blocks.begin(), blocks.end());
      for (const auto& [stage, block] : blocks) {
        BlockTag tag{stage, block, BlockRole::Inner};
        drop_block(student, tag);
        InsertResult ins = insert_block_adaptors(student, tag);
        MimicJob job;
        job.teacher = &teacher;
        job.student = &student;
        for (const auto& a : ins.adaptors) job.trainable.push_back(a.id);
        job.taps = ins.taps;
        job.site_bn = ins.site_bn;
        run_site("drop:" + std::to_string(stage) + "." + std::to_string(block),
                 job);
        merge_all_adaptors(student, ins.adaptors);
      }
      break;
    }
    case CompressionPlan::Scheme::FilterLevel: {
      for (const auto& site : student.conv_ids_in_order()) {
        auto it = plan.keep_counts.find(site);
        if (it == plan.keep_counts.end()) continue;
        auto keep = select_keep_channels(student.node(site).conv(), it->second);
        InsertResult ins = insert_channel_adaptors(
            student, site, AdaptorInit::ChannelSelect, keep);
        MimicJob job;
        job.teacher = &teacher;
        job.student = &student;
        for (const auto& a : ins.adaptors) job.trainable.push_back(a.id);
        job.taps = ins.taps;
        job.site_bn = ins.site_bn;
        run_site(site, job);
        merge_all_adaptors(student, ins.adaptors);
      }
      break;
    }
    case CompressionPlan::Scheme::Unstructured: {
      for (const auto& conv : student.conv_ids_in_order()) {
        auto it = plan.masks.find(conv);
        if (it == plan.masks.end()) continue;
        MaskedSite site;
        site.conv = conv;
        site.base = student.node(conv).conv().weight;
        site.mask = it->second;
        const int64_t c = site.base.dim(1);
        site.u = Tensor({c, c, 1, 1}, 0.0f);
        for (int64_t i = 0; i < c; ++i) site.u.data[i * c + i] = 1.0f;
        MimicJob job;
        job.teacher = &teacher;
        job.student = &student;
        job.taps = {{conv, conv}};
        job.masked = {std::move(site)};
        run_site(conv, job);
        // The trained composition is already baked into the node weight.
      }
      break;
    }
    case CompressionPlan::Scheme::LowRank: {
      for (const auto& conv : student.conv_ids_in_order()) {
        const ConvSpec& spec = student.node(conv).conv();
        if (spec.kernel_h() * spec.kernel_w() <= 1 || spec.groups != 1)
          continue;
        LowRankResult lr =
            low_rank_decompose(spec, plan.energy_threshold);
        const std::string pw = conv + "_pw";
        auto succs = student.succs(conv);
        Node pnode;
        pnode.id = pw;
        pnode.kind = NodeKind::Conv;
        pnode.params = lr.pointwise;
        student.add_node(std::move(pnode), {conv});
        for (const auto& s : succs) student.replace_pred(s, conv, pw);
        student.node(conv).params = lr.spatial;

        MimicJob job;
        job.teacher = &teacher;
        job.student = &student;
        job.trainable = {pw};
        job.taps = {{conv, pw}};
        run_site(conv, job);
      }
      break;
    }
  }

  auto violations = student.validate();
  if (!violations.empty())
    throw_internal("recovered graph is invalid: " + violations[0].rule);
  if (report) report->seconds = seconds_since(start);
  return student;
}

ModelGraph finetune_kd(const ModelGraph& student_in, const ModelGraph& teacher,
                       const TinySet& data, const FinetuneConfig& cfg) {
  if (!data.labeled()) throw_data("kd finetuning needs a labeled tiny set");
  if (data.size() == 0) throw_data("kd finetuning needs a non-empty tiny set");
  if (cfg.beta < 0.0f) throw_data("beta must be non-negative");
  ModelGraph student = student_in;

  const std::string s_sink = student.sink();
  if (student.node(s_sink).kind != NodeKind::FC)
    throw_data("student head is not a fully connected classifier");
  const std::string s_pen = student.preds(s_sink).at(0);
  std::string t_pen;
  if (cfg.beta > 0.0f) {
    const std::string t_sink = teacher.sink();
    if (teacher.node(t_sink).kind != NodeKind::FC)
      throw_data("teacher head is not a fully connected classifier");
    t_pen = teacher.preds(t_sink).at(0);
    auto ss = student.infer_shapes();
    auto ts = teacher.infer_shapes();
    auto features = [](const ShapeCHW& s) {
      return s.flat() ? s.c : s.c * s.h * s.w;
    };
    if (features(ss.at(s_pen)) != features(ts.at(t_pen)))
      throw_data("penultimate feature dimensions differ between student and "
                 "teacher");
  }

  std::set<ParamKey> wanted;
  for (const auto& id : student.order()) {
    const Node& n = student.node(id);
    switch (n.kind) {
      case NodeKind::Conv:
        wanted.insert({id, ParamSlot::ConvWeight});
        if (n.conv().bias) wanted.insert({id, ParamSlot::ConvBias});
        break;
      case NodeKind::FC:
        wanted.insert({id, ParamSlot::FCWeight});
        if (n.fc().bias) wanted.insert({id, ParamSlot::FCBias});
        break;
      case NodeKind::BN:
        wanted.insert({id, ParamSlot::BNGamma});
        wanted.insert({id, ParamSlot::BNBeta});
        break;
      default:
        break;
    }
  }

  const int64_t count = static_cast<int64_t>(data.size());
  const int64_t batch_size = std::min<int64_t>(cfg.batch_size, count);
  const std::vector<int32_t>& labels = *data.labels;
  std::map<ParamKey, Tensor> velocity;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)));
    auto batches = make_batches(count, batch_size, &shuffle);
    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      Tensor x = stack_batch(data, batch);
      if (cfg.augment != AugmentPolicy::None) {
        uint64_t aug_seed = Rng::mix(
            cfg.seed, "ft" + std::to_string(epoch) + "_" + std::to_string(b));
        x = augment_batch(x, cfg.augment, aug_seed);
      }

      Tensor teacher_pen;
      if (cfg.beta > 0.0f) {
        Executor tex;
        ForwardOptions topts;
        topts.taps = {t_pen};
        topts.restrict_to = {t_pen};
        teacher_pen = tex.forward(teacher, x, topts).taps.at(t_pen);
      }

      Executor sex;
      ForwardOptions sopts;
      sopts.keep_state = true;
      sopts.all_bn_batch_stats = true;
      if (cfg.beta > 0.0f) sopts.taps = {s_pen};
      BNBatchStats stats;
      auto sr = sex.forward(student, x, sopts, &stats);

      const int64_t n = static_cast<int64_t>(batch.size());
      const int64_t classes = sr.logits.dim(1);
      Tensor logit_seed(sr.logits.shape, 0.0f);
      for (int64_t i = 0; i < n; ++i) {
        const float* row = sr.logits.ptr() + i * classes;
        const int32_t y = labels[batch[i]];
        if (y < 0 || y >= classes)
          throw_data("label out of range: " + std::to_string(y));
        float mx = row[0];
        for (int64_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < classes; ++j)
          denom += std::exp(static_cast<double>(row[j]) - mx);
        float* seed_row = logit_seed.ptr() + i * classes;
        for (int64_t j = 0; j < classes; ++j) {
          const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
          seed_row[j] =
              static_cast<float>((p - (j == y ? 1.0 : 0.0)) / n);
        }
      }

      std::map<std::string, Tensor> seeds;
      seeds[s_sink] = std::move(logit_seed);
      if (cfg.beta > 0.0f) {
        const Tensor& pen = sex.output_of(s_pen);
        Tensor pen_seed(pen.shape);
        const double inv = 1.0 / static_cast<double>(pen.numel());
        for (int64_t i = 0; i < pen.numel(); ++i) {
          const double d =
              static_cast<double>(pen.data[i]) - teacher_pen.data[i];
          pen_seed.data[i] = static_cast<float>(cfg.beta * 2.0 * d * inv);
        }
        seeds[s_pen] = std::move(pen_seed);
      }

      std::map<ParamKey, Tensor> grads;
      sex.backward(student, seeds, wanted, grads);
      for (auto& [key, g] : grads) {
        Tensor& w = param_tensor(student, key);
        if (cfg.momentum > 0.0f) {
          Tensor& vel = velocity.try_emplace(key, Tensor(w.shape, 0.0f))
                            .first->second;
          for (size_t i = 0; i < w.data.size(); ++i) {
            vel.data[i] = cfg.momentum * vel.data[i] + g.data[i];
            w.data[i] -= cfg.learning_rate * vel.data[i];
          }
        } else {
          for (size_t i = 0; i < w.data.size(); ++i)
            w.data[i] -= cfg.learning_rate * g.data[i];
        }
      }
      apply_bn_updates(student, stats, 0.1f);
    }
  }
  return student;
}

Accuracy evaluate(const ModelGraph& g, const TinySet& data,
                  int64_t batch_size) {
  if (data.size() == 0) throw_data("evaluation needs a non-empty dataset");
  if (!data.labeled()) throw_data("evaluation needs labels");
  const int64_t count = static_cast<int64_t>(data.size());
  const std::vector<int32_t>& labels = *data.labels;

  int64_t top1 = 0, top5 = 0;
  for (const auto& batch :
       make_batches(count, std::min<int64_t>(batch_size, count), nullptr)) {
    Tensor x = stack_batch(data, batch);
    auto out = forward_eval(g, x);
    const int64_t classes = out.logits.dim(1);
    for (size_t i = 0; i < batch.size(); ++i) {
      const float* row = out.logits.ptr() + i * classes;
      const int32_t y = labels[batch[i]];
      if (y < 0 || y >= classes)
        throw_data("label out of range: " + std::to_string(y));
      // Rank under the lowest-index tie rule.
      int64_t rank = 0;
      for (int64_t j = 0; j < classes; ++j) {
        if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
      }
      if (rank < 1) ++top1;
      if (rank < std::min<int64_t>(5, classes)) ++top5;
    }
  }
  return {100.0 * top1 / count, 100.0 * top5 / count};
}

}  // namespace practise
