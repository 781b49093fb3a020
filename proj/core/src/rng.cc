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

#include "subllm/rng.h"

#include <cmath>
#include <numbers>

#include "subllm/errors.h"

namespace subllm {

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::from_state(const RngState& state) {
  Rng rng(state.seed);
  rng.engine_.discard(state.position);
  rng.position_ = state.position;
  return rng;
}

std::uint64_t Rng::next_u64() {
  ++position_;
  return engine_();
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw ConfigError("Rng::index needs a positive bound");
  // Multiply-shift reduction; bias is below 2^-40 for the sizes used here.
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

}  // namespace subllm
