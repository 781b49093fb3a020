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
#include <span>

#include "subllm/model.h"

namespace subllm {

struct FlopsEstimate {
  double subllm = 0.0;    // per token
  double baseline = 0.0;  // per token, same blocks all at full length
  double ratio = 1.0;     // baseline / subllm
  // Token-weighted share of block linear compute that the subsampled model
  // still performs (attention and head excluded).
  double block_fraction = 1.0;
};

// Analytic per-token FLOPs of one training step (forward + backward = 3x
// forward) over a sequence of n tokens. `retention` holds the per-level
// ratios d_l; a block at level l sees n * d_1 * ... * d_l tokens. Per block:
// projections and feed-forward 2m(4C^2 + 3CF), causal scores and weighted
// sum 2m(m+1)C for m tokens. The LM head adds 2nCV. Scorer, upsampler and
// bypass work is ignored.
FlopsEstimate flops_per_token(const ModelConfig& cfg, std::span<const double> retention,
                              std::int64_t n);

}  // namespace subllm
