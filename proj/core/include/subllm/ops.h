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
#include <functional>
#include <span>
#include <vector>

#include "subllm/tensor.h"

namespace subllm {

// Precomputed rotary cosine/sine rows for positions [0, max_positions).
template <typename T>
class RopeTable {
 public:
  RopeTable() = default;
  RopeTable(std::int64_t head_dim, double theta, std::int64_t max_positions);

  std::int64_t head_dim() const { return head_dim_; }
  std::int64_t max_positions() const { return max_positions_; }
  double theta() const { return theta_; }
  const T* cos_row(std::int64_t pos) const;
  const T* sin_row(std::int64_t pos) const;

 private:
  std::int64_t head_dim_ = 0;
  std::int64_t max_positions_ = 0;
  double theta_ = 10000.0;
  std::vector<T> cos_;
  std::vector<T> sin_;
};

// Boolean mask for softmax over the last axis. With `causal`, entry (i, j)
// of every trailing square matrix is allowed iff j <= i. Otherwise, when
// `allowed` is non-empty it has the size of the trailing two axes and is
// broadcast over leading axes. Rows with nothing allowed become all zeros.
struct SoftmaxMask {
  bool causal = false;
  std::vector<std::uint8_t> allowed;
};

// In-place gradient rewrite used by custom_grad. `value` is the forward
// value of the wrapped tensor.
template <typename T>
using GradTransform = std::function<void(std::span<const T> value, std::span<T> grad)>;

// 2-D product [M x K] * [K x N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// x + bias where bias has one element or one element per last-axis channel.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Gathers slices along `dim` in `idx` order. Backward scatter-adds.
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int dim, std::span<const std::int64_t> idx);

// Inverse of a complementary pair of row selections: result row idx_a[i] is
// a row i, result row idx_b[j] is b row j. The index sets must partition
// [0, rows(a) + rows(b)).
template <typename T>
Tensor<T> merge_rows(const Tensor<T>& a, std::span<const std::int64_t> idx_a,
                     const Tensor<T>& b, std::span<const std::int64_t> idx_b);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

// min(max(s, 0), 1); gradient passes where 0 <= s <= 1 inclusive.
template <typename T>
Tensor<T> clamp01(const Tensor<T>& s);

// Identity forward; backward rewrites the incoming gradient with `transform`
// before it propagates to x.
template <typename T>
Tensor<T> custom_grad(const Tensor<T>& x, GradTransform<T> transform);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, const SoftmaxMask& mask = {});

// Row-wise RMS normalization of [N x C] with a learned per-channel gain.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps = T(1e-5));

template <typename T>
Tensor<T> silu(const Tensor<T>& x);

template <typename T>
Tensor<T> embedding(std::span<const int> ids, const Tensor<T>& table);

// Mean next-token cross-entropy of logits [N x V] against N targets.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

// Rotates each row of x [N x C] (heads of the table's head_dim) by its
// absolute position, so relative phases follow position differences.
template <typename T>
Tensor<T> rope(const Tensor<T>& x, std::span<const std::int64_t> positions,
               const RopeTable<T>& table);

// Causal multi-head attention on local row order. q, k, v are [N x C]
// (already rotated). When `probs_out` is given it receives dense
// [heads x N x N] probabilities.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k,
                           const Tensor<T>& v, std::int64_t heads,
                           std::vector<T>* probs_out = nullptr);

// (1 - c) * x + c * y with c broadcast over rows.
template <typename T>
Tensor<T> channel_mix(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& c);

}  // namespace subllm
