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

#include <cstdint>
#include <random>

namespace subllm {

// Serializable generator position: replaying `position` raw draws from
// `seed` reproduces the generator exactly.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t position = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

// Counted wrapper over mt19937_64. All derived draws (uniform, normal,
// bounded index) are built here from raw 64-bit outputs so the sequence is
// independent of the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  static Rng from_state(const RngState& state);
  RngState state() const { return {seed_, position_}; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller; consumes exactly two raw draws, no cached spare.
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace subllm
