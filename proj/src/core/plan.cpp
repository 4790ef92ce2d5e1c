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

#include "core/plan.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "core/errors.hpp"

namespace practise {

namespace fs = std::filesystem;

const char* scheme_name(CompressionPlan::Scheme s) {
  switch (s) {
    case CompressionPlan::Scheme::BlockDrop: return "block_drop";
    case CompressionPlan::Scheme::FilterLevel: return "filter_level";
    case CompressionPlan::Scheme::Unstructured: return "unstructured";
    case CompressionPlan::Scheme::LowRank: return "low_rank";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

CompressionPlan plan_from_text(const std::string& text) {
  CompressionPlan plan;
  bool saw_scheme = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw_config("plan line is not `key = value`: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "scheme") {
      saw_scheme = true;
      if (value == "block_drop")
        plan.scheme = CompressionPlan::Scheme::BlockDrop;
      else if (value == "filter_level")
        plan.scheme = CompressionPlan::Scheme::FilterLevel;
      else if (value == "unstructured")
        plan.scheme = CompressionPlan::Scheme::Unstructured;
      else if (value == "low_rank")
        plan.scheme = CompressionPlan::Scheme::LowRank;
      else
        throw_config("unknown plan scheme: " + value);
    } else if (key == "blocks") {
      for (const auto& item : split(value, ',')) {
        auto dot = item.find('.');
        if (dot == std::string::npos)
          throw_config("block must be `stage.block`: " + item);
        try {
          plan.blocks.emplace_back(std::stoi(item.substr(0, dot)),
                                   std::stoi(item.substr(dot + 1)));
        } catch (const std::exception&) {
          throw_config("block must be `stage.block`: " + item);
        }
      }
    } else if (key == "keep_counts") {
      for (const auto& item : split(value, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
          throw_config("keep_counts entry must be `site:N`: " + item);
        try {
          plan.keep_counts[trim(item.substr(0, colon))] =
              std::stoll(item.substr(colon + 1));
        } catch (const std::exception&) {
          throw_config("keep_counts entry must be `site:N`: " + item);
        }
      }
    } else if (key == "masks") {
      plan.mask_dir = value;
    } else if (key == "energy_threshold") {
      try {
        plan.energy_threshold = std::stod(value);
      } catch (const std::exception&) {
        throw_config("energy_threshold must be a number: " + value);
      }
    } else {
      throw_config("unknown plan key: " + key);
    }
  }
  if (!saw_scheme) throw_config("plan is missing `scheme`");
  return plan;
}

std::string plan_to_text(const CompressionPlan& plan) {
  std::ostringstream os;
  os << "scheme = " << scheme_name(plan.scheme) << "\n";
  if (!plan.blocks.empty()) {
    os << "blocks = ";
    for (size_t i = 0; i < plan.blocks.size(); ++i)
      os << (i ? ", " : "") << plan.blocks[i].first << "."
         << plan.blocks[i].second;
    os << "\n";
  }
  if (!plan.keep_counts.empty()) {
    os << "keep_counts = ";
    bool first = true;
    for (const auto& [site, n] : plan.keep_counts) {
      os << (first ? "" : ", ") << site << ":" << n;
      first = false;
    }
    os << "\n";
  }
  if (!plan.mask_dir.empty()) os << "masks = " << plan.mask_dir << "\n";
  if (plan.scheme == CompressionPlan::Scheme::LowRank)
    os << "energy_threshold = " << plan.energy_threshold << "\n";
  return os.str();
}

void save_plan_masks(const CompressionPlan& plan, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream m(dir / "masks.txt");
  m << "practise masks\n";
  for (const auto& [conv, mask] : plan.masks) {
    m << "mask " << conv;
    for (int64_t d : mask.shape) m << " " << d;
    m << "\n";
    std::ofstream blob(dir / (conv + ".mask.bin"), std::ios::binary);
    blob.write(reinterpret_cast<const char*>(mask.data.data()),
               static_cast<std::streamsize>(mask.data.size() * sizeof(float)));
    if (!blob) throw_data("cannot write mask blob for " + conv);
  }
  if (!m) throw_data("cannot write mask manifest in " + dir.string());
}

void load_plan_masks(CompressionPlan& plan, const fs::path& base) {
  if (plan.mask_dir.empty()) return;
  fs::path dir = plan.mask_dir;
  if (dir.is_relative()) dir = base / dir;
  std::ifstream m(dir / "masks.txt");
  if (!m) throw_data("missing mask manifest in " + dir.string());
  std::string line;
  if (!std::getline(m, line) || line != "practise masks")
    throw_data("not a practise mask directory: " + dir.string());
  while (std::getline(m, line)) {
    std::istringstream is(line);
    std::string word, conv;
    if (!(is >> word >> conv)) continue;
    if (word != "mask") throw_data("bad mask manifest line: " + line);
    std::vector<int64_t> shape;
    int64_t d;
    while (is >> d) shape.push_back(d);
    if (shape.size() != 4) throw_data("mask shape must be 4-d: " + conv);
    Tensor t(shape);
    std::ifstream blob(dir / (conv + ".mask.bin"),
                       std::ios::binary | std::ios::ate);
    if (!blob) throw_data("missing mask blob for " + conv);
    if (static_cast<int64_t>(blob.tellg()) !=
        t.numel() * static_cast<int64_t>(sizeof(float)))
      throw_data("mask blob length mismatch for " + conv);
    blob.seekg(0);
    blob.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    plan.masks[conv] = std::move(t);
  }
}

void validate_plan(const CompressionPlan& plan, const ModelGraph& teacher) {
  switch (plan.scheme) {
    case CompressionPlan::Scheme::BlockDrop: {
      std::set<int> stages;
      for (const auto& [stage, block] : plan.blocks) {
        if (!stages.insert(stage).second)
          throw_config("block drop plans may remove one block per stage at "
                       "most (stage " + std::to_string(stage) + ")");
        bool found = false;
        for (const auto& [id, tag] : teacher.block_tags) {
          if (tag.stage != stage || tag.block != block) continue;
          found = true;
          if (tag.role == BlockRole::First)
            throw_config("block " + std::to_string(stage) + "." +
                         std::to_string(block) + " is a stage-first block");
        }
        if (!found)
          throw_config("block " + std::to_string(stage) + "." +
                       std::to_string(block) + " does not exist");
      }
      break;
    }
    case CompressionPlan::Scheme::FilterLevel: {
      if (plan.keep_counts.empty())
        throw_config("filter_level plan has no keep_counts");
      for (const auto& [site, n] : plan.keep_counts) {
        if (!teacher.has_node(site) ||
            teacher.node(site).kind != NodeKind::Conv)
          throw_config("keep_counts site is not a conv: " + site);
        const int64_t c = teacher.node(site).conv().out_channels();
        if (n < 1 || n >= c)
          throw_config("keep count for " + site + " must be in [1, " +
                       std::to_string(c) + ")");
      }
      break;
    }
    case CompressionPlan::Scheme::Unstructured: {
      if (plan.masks.empty())
        throw_config("unstructured plan has no masks loaded");
      for (const auto& [conv, mask] : plan.masks) {
        if (!teacher.has_node(conv) ||
            teacher.node(conv).kind != NodeKind::Conv)
          throw_config("mask names a non-conv node: " + conv);
        if (mask.shape != teacher.node(conv).conv().weight.shape)
          throw_config("mask shape mismatch for " + conv);
        for (float v : mask.data)
          if (v != 0.0f && v != 1.0f)
            throw_config("mask entries must be 0/1 for " + conv);
      }
      break;
    }
    case CompressionPlan::Scheme::LowRank:
      if (plan.energy_threshold <= 0.0 || plan.energy_threshold > 1.0)
        throw_config("energy_threshold must be in (0, 1]");
      break;
  }
}

}  // namespace practise
