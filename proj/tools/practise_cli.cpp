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

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "practise/practise.h"

namespace {

int fail(practise_status status) {
  std::fprintf(stderr, "error: %s\n", practise_last_error());
  return static_cast<int>(status);
}

struct GraphHandle {
  practise_graph* ptr = nullptr;
  ~GraphHandle() { practise_graph_free(ptr); }
};

struct TinySetHandle {
  practise_tinyset* ptr = nullptr;
  ~TinySetHandle() { practise_tinyset_free(ptr); }
};

struct StringHandle {
  char* ptr = nullptr;
  ~StringHandle() { practise_string_free(ptr); }
};

// --model accepts either a checkpoint directory or `name:variant`.
practise_status open_model(const std::string& spec, uint64_t seed,
                           practise_graph** out) {
  auto colon = spec.find(':');
  if (colon != std::string::npos && spec.find('/') == std::string::npos) {
    return practise_graph_build(spec.substr(0, colon).c_str(),
                                spec.substr(colon + 1).c_str(), seed, out);
  }
  return practise_graph_load(spec.c_str(), out);
}

// --data accepts `blob:<dir>`, `folder:<dir>`, `patterns10`, or `gaussian`.
practise_status open_data(const std::string& spec, const std::string& mode,
                          std::int64_t k_or_n, uint64_t seed,
                          const std::vector<std::int64_t>& shape,
                          practise_tinyset** out) {
  if (spec.rfind("blob:", 0) == 0)
    return practise_tinyset_load(spec.substr(5).c_str(), out);
  if (spec.rfind("folder:", 0) == 0)
    return practise_tinyset_from_folder(spec.substr(7).c_str(), mode.c_str(),
                                        k_or_n, seed, out);
  if (spec == "patterns10")
    return practise_tinyset_patterns(mode.c_str(), k_or_n, seed, out);
  if (spec == "gaussian")
    return practise_tinyset_gaussian(k_or_n, shape[0], shape[1], shape[2],
                                     seed, out);
  std::fprintf(stderr, "error: unknown data source '%s'\n", spec.c_str());
  return PRACTISE_ERR_CONFIG;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiny-set CNN compression toolkit"};
  app.set_version_flag("--version", practise_version());
  app.require_subcommand(1);

  // compress: config-driven end-to-end pipeline.
  auto* compress = app.add_subcommand(
      "compress", "Run the config-driven compression pipeline");
  std::string config_path;
  std::vector<std::string> overrides;
  compress->add_option("--config", config_path, "Run configuration file")
      ->required();
  compress->add_option("--set", overrides,
                       "Override a config key, e.g. --set mimic.lr=0.001");

  // Shared options for the direct subcommands.
  std::string model_spec, teacher_spec, data_spec = "patterns10";
  std::string mode = "random_n", out_dir;
  std::int64_t k_or_n = 50;
  uint64_t data_seed = 0, model_seed = 0;
  std::vector<std::int64_t> shape = {3, 32, 32};

  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_spec,
                    "Checkpoint directory or `name:variant`")
        ->required();
    cmd->add_option("--model-seed", model_seed, "Init seed for built models");
  };
  auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_spec,
                    "blob:<dir> | folder:<dir> | patterns10 | gaussian");
    cmd->add_option("--mode", mode, "kshot | random_n");
    cmd->add_option("--n", k_or_n, "Samples (random_n) or shots (kshot)");
    cmd->add_option("--seed", data_seed, "Sampling seed");
    cmd->add_option("--shape", shape, "C H W for gaussian data")
        ->expected(3);
  };

  auto* finetune =
      app.add_subcommand("finetune", "KD finetuning against a teacher");
  add_model(finetune);
  finetune->add_option("--teacher", teacher_spec, "Teacher checkpoint or name")
      ->required();
  add_data(finetune);
  finetune->add_option("--out", out_dir, "Output checkpoint directory")
      ->required();
  double ft_lr = 1e-4, ft_beta = 100.0, ft_momentum = 0.0;
  std::int64_t ft_epochs = 100, ft_batch = 256;
  uint64_t ft_seed = 0;
  std::string ft_augment = "none";
  finetune->add_option("--lr", ft_lr, "Learning rate");
  finetune->add_option("--momentum", ft_momentum, "SGD momentum");
  finetune->add_option("--epochs", ft_epochs, "Epochs");
  finetune->add_option("--batch", ft_batch, "Batch size");
  finetune->add_option("--beta", ft_beta, "Feature-mimicking weight");
  finetune->add_option("--train-seed", ft_seed, "Training seed");
  finetune->add_option("--augment", ft_augment, "none | imagenet | cifar");

  auto* eval = app.add_subcommand("eval", "Top-1/top-5 accuracy");
  add_model(eval);
  add_data(eval);

  auto* cost = app.add_subcommand("cost", "Parameter and MAC counts");
  add_model(cost);

  auto* bench = app.add_subcommand("bench", "Wall-clock latency");
  add_model(bench);
  std::int64_t bench_batch = 64, bench_warmup = 10, bench_runs = 30;
  int bench_threads = 1;
  std::string bench_out;
  bench->add_option("--batch", bench_batch, "Batch size");
  bench->add_option("--warmup", bench_warmup, "Untimed warmup runs");
  bench->add_option("--runs", bench_runs, "Timed runs (>= 5)");
  bench->add_option("--threads", bench_threads, "Worker threads");
  bench->add_option("--out", bench_out, "Write the report here too");

  auto* sample = app.add_subcommand("sample", "Draw and export a tiny set");
  add_data(sample);
  sample->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (compress->parsed()) {
    std::vector<const char*> ov;
    for (const auto& s : overrides) ov.push_back(s.c_str());
    StringHandle manifest;
    practise_status s = practise_run_pipeline(
        config_path.c_str(), ov.data(), ov.size(), &manifest.ptr);
    if (s != PRACTISE_OK) return fail(s);
    std::fputs(manifest.ptr, stdout);
    return 0;
  }

  if (finetune->parsed()) {
    GraphHandle student, teacher, tuned;
    TinySetHandle data;
    if (auto s = open_model(model_spec, model_seed, &student.ptr)) return fail(s);
    if (auto s = open_model(teacher_spec, model_seed, &teacher.ptr))
      return fail(s);
    if (auto s = open_data(data_spec, mode, k_or_n, data_seed, shape, &data.ptr))
      return fail(s);
    practise_finetune_config cfg;
    practise_finetune_config_default(&cfg);
    cfg.learning_rate = static_cast<float>(ft_lr);
    cfg.momentum = static_cast<float>(ft_momentum);
    cfg.batch_size = ft_batch;
    cfg.epochs = ft_epochs;
    cfg.beta = static_cast<float>(ft_beta);
    cfg.seed = ft_seed;
    cfg.augment = ft_augment.c_str();
    if (auto s = practise_finetune(student.ptr, teacher.ptr, data.ptr, &cfg,
                                   &tuned.ptr))
      return fail(s);
    if (auto s = practise_graph_save(tuned.ptr, out_dir.c_str()))
      return fail(s);
    std::printf("finetuned checkpoint written to %s\n", out_dir.c_str());
    return 0;
  }

  if (eval->parsed()) {
    GraphHandle model;
    TinySetHandle data;
    if (auto s = open_model(model_spec, model_seed, &model.ptr)) return fail(s);
    if (auto s = open_data(data_spec, mode, k_or_n, data_seed, shape, &data.ptr))
      return fail(s);
    double top1 = 0, top5 = 0;
    if (auto s = practise_evaluate(model.ptr, data.ptr, &top1, &top5))
      return fail(s);
    std::printf("top1 %.2f\ntop5 %.2f\n", top1, top5);
    return 0;
  }

  if (cost->parsed()) {
    GraphHandle model;
    if (auto s = open_model(model_spec, model_seed, &model.ptr)) return fail(s);
    uint64_t params = 0, macs = 0;
    if (auto s = practise_graph_cost(model.ptr, &params, &macs))
      return fail(s);
    std::printf("params %llu (%.2f M)\nmacs %llu (%.2f G)\n",
                static_cast<unsigned long long>(params), params / 1e6,
                static_cast<unsigned long long>(macs), macs / 1e9);
    return 0;
  }

  if (bench->parsed()) {
    GraphHandle model;
    if (auto s = open_model(model_spec, model_seed, &model.ptr)) return fail(s);
    StringHandle report;
    if (auto s = practise_measure_latency(model.ptr, model_spec.c_str(),
                                          bench_batch, bench_warmup,
                                          bench_runs, bench_threads,
                                          &report.ptr))
      return fail(s);
    std::fputs(report.ptr, stdout);
    if (!bench_out.empty()) {
      std::ofstream out(bench_out);
      out << report.ptr;
    }
    return 0;
  }

  if (sample->parsed()) {
    TinySetHandle data;
    if (auto s = open_data(data_spec, mode, k_or_n, data_seed, shape, &data.ptr))
      return fail(s);
    if (auto s = practise_tinyset_save(data.ptr, out_dir.c_str()))
      return fail(s);
    size_t n = 0;
    practise_tinyset_size(data.ptr, &n);
    std::printf("tiny set with %zu images written to %s\n", n,
                out_dir.c_str());
    return 0;
  }

  return 0;
}
