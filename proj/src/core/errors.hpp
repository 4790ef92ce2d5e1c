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

#include <stdexcept>
#include <string>

namespace practise {

// Error categories line up with the CLI exit-code map:
// 0 ok, 2 config, 3 data, 4 training, 5 measurement, 1 anything else.
enum class ErrorKind {
  Internal = 1,
  Config = 2,
  Data = 3,
  Training = 4,
  Measurement = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::Data, msg);
}
[[noreturn]] inline void throw_training(const std::string& msg) {
  throw Error(ErrorKind::Training, msg);
}
[[noreturn]] inline void throw_measurement(const std::string& msg) {
  throw Error(ErrorKind::Measurement, msg);
}
[[noreturn]] inline void throw_internal(const std::string& msg) {
  throw Error(ErrorKind::Internal, msg);
}

}  // namespace practise
