// Copyright 2026 The ast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ast {

// Error categories surface in CLI output as one machine-parsable token.
enum class ErrorCategory {
  kUsage,       // bad call / wrong argument combination
  kConfig,      // invalid configuration value
  kInput,       // invalid data fed to an operation
  kIo,          // filesystem / serialization failure
  kDimension,   // tensor shape mismatch
  kNumeric,     // NaN/Inf or non-convergent numerics
  kDependency,  // missing prerequisite stage or artifact
};

const char* to_string(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& msg)
      : std::runtime_error(msg), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& msg) {
  throw Error(category, msg);
}

inline void require(bool cond, ErrorCategory category, const std::string& msg) {
  if (!cond) fail(category, msg);
}

}  // namespace ast
