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

#include "core/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "core/bench.hpp"
#include "core/builders.hpp"
#include "core/checkpoint.hpp"
#include "core/errors.hpp"

namespace practise {

namespace fs = std::filesystem;

ModelGraph model_from_config(const Config& cfg) {
  const std::string checkpoint = cfg.get_string("model.checkpoint");
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  const std::string name = cfg.get_string("model.name");
  if (name.empty())
    throw_config("config needs model.name or model.checkpoint");
  const std::string variant = cfg.get_string("model.variant", "imagenet");
  return build_architecture(name, variant,
                            static_cast<uint64_t>(cfg.get_int("model.seed", 0)));
}

namespace {

std::vector<float> parse_floats(const std::string& s) {
  std::vector<float> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(std::stof(item));
  return out;
}

}  // namespace

TinySet tinyset_from_config(const Config& cfg, const ModelGraph& model) {
  const std::string source = cfg.get_string("data.source");
  if (source.empty()) throw_config("config needs data.source");
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("data.seed", 0));
  const int64_t k_or_n = cfg.get_int("data.k_or_n", 50);

  if (source == "gaussian") {
    return synth_gaussian(k_or_n, model.input.channels, model.input.height,
                          model.input.width, seed);
  }
  if (source.rfind("blob:", 0) == 0) {
    return load_tinyset(source.substr(5));
  }

  ImageSource src;
  if (source == "patterns10") {
    // A fixed pool several times larger than the draw; its size derives from
    // k_or_n so a stored recipe reproduces the identical set.
    src = synth_patterns(std::max<int64_t>(10 * k_or_n, 100), 0);
  } else if (source.rfind("folder:", 0) == 0) {
    src = load_image_folder(source.substr(7),
                            parse_floats(cfg.get_string("data.mean")),
                            parse_floats(cfg.get_string("data.std")));
  } else {
    throw_config("unknown data.source: " + source);
  }

  const std::string mode_name = cfg.get_string("data.mode", "random_n");
  auto mode = recipe_mode_from_name(mode_name);
  if (!mode || *mode == Recipe::Mode::Synthetic)
    throw_config("data.mode must be kshot or random_n for source " + source);
  return sample_tinyset(src, *mode, k_or_n, seed);
}

CompressionPlan plan_from_config(const Config& cfg) {
  const std::string file = cfg.get_string("plan.file");
  CompressionPlan plan;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw_config("cannot open plan file: " + file);
    std::stringstream buf;
    buf << in.rdbuf();
    plan = plan_from_text(buf.str());
  } else {
    std::ostringstream text;
    text << "scheme = " << cfg.get_string("plan.scheme", "block_drop") << "\n";
    if (cfg.has("plan.blocks"))
      text << "blocks = " << cfg.get_string("plan.blocks") << "\n";
    if (cfg.has("plan.keep_counts"))
      text << "keep_counts = " << cfg.get_string("plan.keep_counts") << "\n";
    if (cfg.has("plan.masks"))
      text << "masks = " << cfg.get_string("plan.masks") << "\n";
    if (cfg.has("plan.energy_threshold"))
      text << "energy_threshold = " << cfg.get_string("plan.energy_threshold")
           << "\n";
    plan = plan_from_text(text.str());
  }
  load_plan_masks(plan, file.empty() ? fs::current_path()
                                     : fs::path(file).parent_path());
  return plan;
}

MimicConfig mimic_from_config(const Config& cfg) {
  MimicConfig m;
  m.learning_rate = static_cast<float>(cfg.get_double("mimic.lr", 1e-4));
  m.batch_size = cfg.get_int("mimic.batch", 64);
  m.max_epochs = cfg.get_int("mimic.epochs", 1000);
  m.patience = cfg.get_int("mimic.patience", 10);
  m.seed = static_cast<uint64_t>(cfg.get_int("mimic.seed", 0));
  m.update_all_bn_stats = cfg.get_bool("mimic.update_all_bn", false);
  auto policy = augment_policy_from_name(cfg.get_string("data.augment", "none"));
  if (!policy) throw_config("unknown data.augment policy");
  m.augment = *policy;
  return m;
}

FinetuneConfig finetune_from_config(const Config& cfg) {
  FinetuneConfig f;
  f.learning_rate = static_cast<float>(cfg.get_double("finetune.lr", 1e-4));
  f.momentum = static_cast<float>(cfg.get_double("finetune.momentum", 0.0));
  f.batch_size = cfg.get_int("finetune.batch", 256);
  f.epochs = cfg.get_int("finetune.epochs", 100);
  f.beta = static_cast<float>(cfg.get_double("finetune.beta", 100.0));
  f.seed = static_cast<uint64_t>(cfg.get_int("finetune.seed", 0));
  auto policy = augment_policy_from_name(cfg.get_string("data.augment", "none"));
  if (!policy) throw_config("unknown data.augment policy");
  f.augment = *policy;
  return f;
}

namespace {

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string indent_block(const std::string& text) {
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) os << "  " << line << "\n";
  return os.str();
}

}  // namespace

PipelineResult run_pipeline(const Config& cfg) {
  const std::string out_dir = cfg.get_string("out.dir");
  if (out_dir.empty()) throw_config("config needs out.dir");

  ModelGraph teacher = model_from_config(cfg);
  CompressionPlan plan = plan_from_config(cfg);
  validate_plan(plan, teacher);

  TinySet data = tinyset_from_config(cfg, teacher);
  const bool finetune_enabled = cfg.get_bool("finetune.enabled", false);
  if (finetune_enabled && !data.labeled())
    throw_config("finetune.enabled requires a labeled tiny set (source '" +
                 data.recipe.source + "' is unlabeled)");

  MimicConfig mimic = mimic_from_config(cfg);
  FinetuneConfig finetune = finetune_from_config(cfg);
  const int64_t freeze_front_k = cfg.get_int("recovery.freeze_front_k", 0);

  CostReport before = count_cost(teacher);
  PractiseReport recovery_report;
  ModelGraph compressed =
      run_practise(teacher, plan, data, mimic, freeze_front_k,
                   &recovery_report);
  if (finetune_enabled)
    compressed = finetune_kd(compressed, teacher, data, finetune);
  CostReport after = count_cost(compressed);

  std::optional<Accuracy> accuracy;
  if (data.labeled() && cfg.get_bool("eval.enabled", true))
    accuracy = evaluate(compressed, data);

  std::optional<LatencyReport> latency;
  if (cfg.get_bool("bench.enabled", false)) {
    latency = measure_latency(
        compressed, cfg.get_string("model.name", "model"),
        cfg.get_int("bench.batch", 64),
        cfg.get_int("bench.warmup", 10), cfg.get_int("bench.runs", 30),
        static_cast<int>(cfg.get_int("bench.threads", 1)),
        static_cast<uint64_t>(cfg.get_int("data.seed", 0)));
  }

  // Persist everything under out.dir.
  fs::create_directories(out_dir);
  const fs::path checkpoint_dir = fs::path(out_dir) / "compressed";
  save_checkpoint(compressed, checkpoint_dir);
  save_tinyset(data, fs::path(out_dir) / "tinyset");
  {
    std::ofstream p(fs::path(out_dir) / "plan.txt");
    p << plan_to_text(plan);
  }
  {
    std::ofstream r(fs::path(out_dir) / "recovery_report.txt");
    r << recovery_report.to_text();
  }
  if (latency) {
    std::ofstream l(fs::path(out_dir) / "latency_report.txt");
    l << latency->to_text();
  }

  std::ostringstream m;
  m << "practise run manifest\n";
  m << "tool_version " << kToolVersion << "\n";
  m << "created " << timestamp() << "\n";
  m << "config:\n" << indent_block(cfg.to_text());
  m << "plan:\n" << indent_block(plan_to_text(plan));
  m << "tinyset: source " << data.recipe.source << " mode "
    << recipe_mode_name(data.recipe.mode) << " k_or_n " << data.recipe.k_or_n
    << " seed " << data.recipe.seed << " size " << data.size() << "\n";
  m << "cost_before params " << before.params << " macs " << before.macs
    << "\n";
  m << "cost_after params " << after.params << " macs " << after.macs << "\n";
  m << "recovery:\n" << indent_block(recovery_report.to_text());
  if (accuracy)
    m << "tinyset_accuracy top1 " << accuracy->top1 << " top5 "
      << accuracy->top5 << "\n";
  if (latency) m << "latency_median_ms " << latency->median_ms << "\n";
  m << "checkpoint " << checkpoint_dir.string() << "\n";
  m << "end\n";

  PipelineResult result;
  result.manifest_text = m.str();
  result.out_dir = out_dir;
  result.checkpoint_dir = checkpoint_dir;
  std::ofstream mf(fs::path(out_dir) / "manifest.txt");
  mf << result.manifest_text;
  if (!mf) throw_data("cannot write manifest in " + out_dir);
  return result;
}

PipelineResult run_pipeline(const fs::path& config_path,
                            const std::vector<std::string>& overrides) {
  Config cfg = Config::from_file(config_path);
  cfg.apply_overrides(overrides);
  return run_pipeline(cfg);
}

}  // namespace practise
