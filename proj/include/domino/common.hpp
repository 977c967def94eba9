// Copyright (c) 2026 The Domino Authors. All Rights Reserved.
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

namespace domino {

// Bad user-supplied configuration: unknown keys, invalid dimensions,
// missing files, duplicate ids, out-of-range enum values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg)
      : std::runtime_error("config error: " + msg) {}
};

// Numerically meaningless input, e.g. a zero-norm embedding fed to a
// cosine, or a zero source mIoU in a ratio.
class DegenerateInputError : public std::runtime_error {
 public:
  explicit DegenerateInputError(const std::string& msg)
      : std::runtime_error("degenerate input: " + msg) {}
};

// An internal precondition was violated by the caller (shape mismatch,
// label out of range, iteration index out of schedule bounds).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg)
      : std::runtime_error("contract violation: " + msg) {}
};

inline void check_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline void check_contract(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace domino
