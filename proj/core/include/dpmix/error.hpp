// Copyright 2026 The dpmix Authors
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

namespace dpmix {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a precondition (bad argument, dimension mismatch, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A construction would exceed a hard size cap.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A certified bound or internal invariant failed at runtime.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// The sampler hit a non-finite log joint. `state_dump` holds a readable
/// snapshot of the chain at the point of failure.
class FitAborted : public Error {
 public:
  FitAborted(const std::string& what, std::string state_dump)
      : Error(what), state_dump_(std::move(state_dump)) {}

  const std::string& state_dump() const noexcept { return state_dump_; }

 private:
  std::string state_dump_;
};

}  // namespace dpmix
