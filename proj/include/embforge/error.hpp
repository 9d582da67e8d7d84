// Copyright 2026 the embforge authors
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

namespace embforge {

enum class ErrorKind {
  kDomain,     // mathematically undefined input (zero-norm vector, ...)
  kDimension,  // shape mismatch
  kConfig,     // invalid hyperparameter or option
  kInput,      // malformed user input (empty text, bad token id)
  kData,       // dataset-level contract violation
  kNumeric,    // non-finite value during computation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDomain: return "domain error";
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kNumeric: return "numeric error";
  }
  return "error";
}

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) raise(kind, what);
}

}  // namespace embforge
