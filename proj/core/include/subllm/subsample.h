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

// Token subsampling, upsampling and bypass mechanics.
//
// A subsampler scores every token with a linear map, clamps the score into
// a weight w in [0, 1], and keeps a subset of tokens (top ceil(N*d) by w in
// training, s > v at inference). Its paired upsampler blends the inner
// output back into the full sequence with per-token coefficients
//   w_scaling = w_kept - w_sample,
// where w_sample is drawn with replacement from the discarded tokens'
// weights, so discarded scores also receive gradient. The bypass blends the
// subsampler's input with the upsampler's output through a per-channel
// weight c whose range is enforced by reshaping its gradient.

#include <cstdint>
#include <span>
#include <vector>

#include "subllm/ops.h"
#include "subllm/rng.h"
#include "subllm/tensor.h"

namespace subllm {

// Gradient-shaping targets for the pre-clamp scores of one subsampler.
struct BalancerConfig {
  double p_max = 0.68;  // max fraction of positive scores
  double p_min = 0.58;  // min fraction of positive scores
  double a_max = 4.0;   // max mean |s|
  double a_min = 1.0;   // min mean |s|
  double lambda = 0.04; // penalty scale relative to mean |grad|

  // Band of +-0.05 around the retention ratio d.
  static BalancerConfig for_retention(double d);
  void validate() const;
};

struct BalancerStats {
  double positive_fraction = 0.0;  // p
  double mean_abs = 0.0;           // a
};

template <typename T>
BalancerStats balancer_stats(std::span<const T> scores);

struct Selection {
  std::vector<std::int64_t> kept;       // ascending
  std::vector<std::int64_t> discarded;  // ascending
};

// Everything one subsampling event decided, for inspection and metrics.
struct SubsampleRecord {
  int level = 0;                            // 1-based
  std::vector<double> scores;               // pre-clamp s
  std::vector<double> weights;              // clamp01(s)
  std::vector<std::int64_t> kept;           // local indices, ascending
  std::vector<std::int64_t> discarded;      // local indices, ascending
  std::vector<std::int64_t> kept_positions; // original-sequence positions
  double retention = 1.0;                   // configured d for the level
};

template <typename T>
struct UpsampleScaling {
  std::vector<T> w_kept;
  std::vector<T> w_discarded;
  std::vector<T> w_sample;
  std::vector<std::int64_t> sample_sources;  // positions within `discarded`
  Tensor<T> w_scaling;                       // [|I|], differentiable in w
};

template <typename T>
struct BypassState {
  Tensor<T> c;  // [C]
  double c_min = 0.9;
  double c_max = 1.0;
};

struct BypassSchedule {
  double c_min_start = 0.9;
  double c_min_end = 0.2;
  double c_max = 1.0;
  std::int64_t warm_steps = 20000;

  double c_min_at(std::int64_t step) const;
};

// ceil(n * d) with a small guard against representation error in d.
std::int64_t retained_count(std::int64_t n, double d);

// s_n = x_n . weight + bias for x [N x C], weight [C x 1], bias [1].
template <typename T>
Tensor<T> score_tokens(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// Identity forward. Backward adds, with delta = lambda * mean|g|:
//   +delta if p > p_max, -delta if p < p_min,
//   +delta*sign(s) if a > a_max, -delta*sign(s) if a < a_min.
template <typename T>
Tensor<T> balance(const Tensor<T>& s, const BalancerConfig& cfg);

// clamp01(s) whose backward also applies the balancer penalty. The penalty
// scale delta = lambda * mean|g_w| is taken from the gradient with respect
// to the clamped weights, before the clamp zeroes it outside [0, 1], so the
// penalty keeps acting when most scores are saturated.
template <typename T>
Tensor<T> balanced_clamp01(const Tensor<T>& s, const BalancerConfig& cfg);

// Indices of the ceil(N*d) largest weights (ties: lower index first),
// returned ascending, plus the complement.
template <typename T>
Selection select_topk(std::span<const T> w, double d);

// Inference keep rule for one token.
template <typename T>
bool select_threshold(T score, T threshold = T(0)) {
  return score > threshold;
}

// Kept set and complement by the inference rule over a whole sequence.
template <typename T>
Selection select_by_threshold(std::span<const T> scores, T threshold);

// w_scaling = w[I] - w[Î][draws]; the draws are |I| uniform picks with
// replacement from Î. With Î empty, w_sample = 0.
template <typename T>
UpsampleScaling<T> compute_scaling(const Tensor<T>& w, const Selection& selection, Rng& rng);

// Deterministic scaling used at inference and evaluation: w_scaling = w[I].
template <typename T>
UpsampleScaling<T> inference_scaling(const Tensor<T>& w, const Selection& selection);

// x_new[I_j] = s_j * g_j + (1 - s_j) * x[I_j]; other rows pass through.
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, const Tensor<T>& inner, const Tensor<T>& w_scaling,
                   std::span<const std::int64_t> kept);

// (1 - c) * x + c * y with the range-enforcing gradient on c: an increase
// is forced when c_j < c_min and a decrease when c_j > c_max.
template <typename T>
Tensor<T> bypass_combine(const Tensor<T>& x, const Tensor<T>& y, const BypassState<T>& state);

// Applies the schedule's c_min for `step` to the state; returns it.
template <typename T>
double bypass_schedule_step(BypassState<T>& state, std::int64_t step,
                            const BypassSchedule& schedule);

}  // namespace subllm
