// Copyright 2026 The subllm Authors
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

namespace subllm {

// Base class for every error raised by the library. Callers that only care
// about success/failure can catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree (matmul inner extents, row-count mismatch, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Structure-string grammar violation. `position` is the 0-based token index.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int position)
      : Error(what), position_(position) {}
  int position() const { return position_; }

 private:
  int position_;
};

// Structure string is grammatical but the S/U/B nesting is invalid.
class StructureError : public Error {
 public:
  StructureError(const std::string& what, int level)
      : Error(what), level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class WindowError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class EmptySequenceError : public Error {
 public:
  using Error::Error;
};

// A finite-difference check cannot be trusted because the function under
// test is not deterministic.
class OracleInvalidError : public Error {
 public:
  using Error::Error;
};

}  // namespace subllm
