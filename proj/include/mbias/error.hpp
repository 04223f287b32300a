// Copyright 2026 The mbias Authors. All Rights Reserved.
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

namespace mbias {

/// Process exit codes used by the command line tool. Every library error
/// carries one so the CLI can map failures without string matching.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kIo = 2,
  kNetwork = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invariant, contract or input-validation failure.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ExitCode::kValidation, what) {}
};

/// Missing files, unreadable input, bad configuration.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

/// Network failure after the retry budget is spent.
class NetworkError : public Error {
 public:
  explicit NetworkError(const std::string& what)
      : Error(ExitCode::kNetwork, what) {}
};

}  // namespace mbias
