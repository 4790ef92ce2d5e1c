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

#include "core/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "core/errors.hpp"

namespace practise {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "version",
      "model.name", "model.variant", "model.checkpoint", "model.seed",
      "plan.file", "plan.scheme", "plan.blocks", "plan.keep_counts",
      "plan.masks", "plan.energy_threshold",
      "data.source", "data.mode", "data.k_or_n", "data.seed", "data.augment",
      "data.mean", "data.std",
      "mimic.lr", "mimic.batch", "mimic.epochs", "mimic.patience",
      "mimic.seed", "mimic.update_all_bn",
      "finetune.enabled", "finetune.lr", "finetune.momentum",
      "finetune.batch", "finetune.epochs", "finetune.beta", "finetune.seed",
      "recovery.freeze_front_k",
      "bench.enabled", "bench.batch", "bench.threads", "bench.warmup",
      "bench.runs",
      "eval.enabled",
      "out.dir",
  };
  return keys;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void Config::set_checked(const std::string& key, const std::string& value) {
  if (!known_keys().count(key))
    throw_config("unknown config key: " + key);
  values_[key] = value;
}

Config Config::from_text(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw_config("config line is not `key = value`: " + line);
    cfg.set_checked(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (cfg.get_int("version", kConfigVersion) != kConfigVersion)
    throw_config("unsupported config version");
  return cfg;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_config("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

void Config::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw_config("override is not `key=value`: " + item);
    set_checked(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
  }
}

bool Config::has(const std::string& key) const { return values_.count(key); }

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw_config("config key " + key + " must be an integer, got '" +
                 it->second + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw_config("config key " + key + " must be a number, got '" +
                 it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw_config("config key " + key + " must be a boolean, got '" + it->second +
               "'");
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

}  // namespace practise
