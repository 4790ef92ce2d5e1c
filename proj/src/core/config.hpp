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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace practise {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kConfigVersion = 1;

// `key = value` run configuration with a closed, versioned schema. Unknown
// keys are rejected so typos fail fast.
class Config {
 public:
  static Config from_text(const std::string& text);
  static Config from_file(const std::filesystem::path& path);

  // "key=value" strings, e.g. from CLI flags; they win over file values.
  void apply_overrides(const std::vector<std::string>& overrides);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback = "") const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Rendered back as config text (stable order).
  std::string to_text() const;

 private:
  void set_checked(const std::string& key, const std::string& value);
  std::map<std::string, std::string> values_;
};

}  // namespace practise
