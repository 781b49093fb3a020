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

#include "kernels.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

namespace subllm::kernels {

namespace {

constexpr std::int64_t kRowBlock = 4;
constexpr std::int64_t kColBlock = 256;

// Four output rows at a time; the j loop is the vectorized one.
template <typename T>
void gemm_rows4(std::int64_t n0, std::int64_t n1, std::int64_t n,
                std::int64_t k, const T* a0, const T* a1, const T* a2,
                const T* a3, const T* b, T* c0, T* c1, T* c2, T* c3) {
  for (std::int64_t p = 0; p < k; ++p) {
    const T* __restrict brow = b + p * n;
    const T x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
    T* __restrict r0 = c0;
    T* __restrict r1 = c1;
    T* __restrict r2 = c2;
    T* __restrict r3 = c3;
    for (std::int64_t j = n0; j < n1; ++j) {
      const T bj = brow[j];
      r0[j] += x0 * bj;
      r1[j] += x1 * bj;
      r2[j] += x2 * bj;
      r3[j] += x3 * bj;
    }
  }
}

template <typename T>
void gemm_row1(std::int64_t n0, std::int64_t n1, std::int64_t n,
               std::int64_t k, const T* a0, const T* b, T* c0) {
  for (std::int64_t p = 0; p < k; ++p) {
    const T* __restrict brow = b + p * n;
    const T x0 = a0[p];
    T* __restrict r0 = c0;
    for (std::int64_t j = n0; j < n1; ++j) r0[j] += x0 * brow[j];
  }
}

}  // namespace

template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  if (m == 0 || n == 0 || k == 0) return;
  for (std::int64_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::int64_t j1 = std::min(n, j0 + kColBlock);
    std::int64_t i = 0;
    for (; i + kRowBlock <= m; i += kRowBlock) {
      gemm_rows4(j0, j1, n, k, a + i * k, a + (i + 1) * k, a + (i + 2) * k,
                 a + (i + 3) * k, b, c + i * n, c + (i + 1) * n,
                 c + (i + 2) * n, c + (i + 3) * n);
    }
    for (; i < m; ++i) gemm_row1(j0, j1, n, k, a + i * k, b, c + i * n);
  }
}

template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst) {
  constexpr std::int64_t kTile = 32;
  for (std::int64_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::int64_t r1 = std::min(rows, r0 + kTile);
    for (std::int64_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::int64_t c1 = std::min(cols, c0 + kTile);
      for (std::int64_t r = r0; r < r1; ++r) {
        for (std::int64_t cc = c0; cc < c1; ++cc) dst[cc * rows + r] = src[r * cols + cc];
      }
    }
  }
}

template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  std::vector<T> at(static_cast<size_t>(m * k));
  transpose(k, m, a, at.data());
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  std::vector<T> bt(static_cast<size_t>(n * k));
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

template <typename T>
void rope_row(T* row, std::int64_t width, std::int64_t head_dim, const T* cs,
              const T* sn, int sign) {
  const std::int64_t half = head_dim / 2;
  for (std::int64_t h = 0; h < width; h += head_dim) {
    for (std::int64_t i = 0; i < half; ++i) {
      const T c = cs[i];
      const T s = sign > 0 ? sn[i] : -sn[i];
      T& x0 = row[h + 2 * i];
      T& x1 = row[h + 2 * i + 1];
      const T a = x0, b = x1;
      x0 = a * c - b * s;
      x1 = a * s + b * c;
    }
  }
}

template <typename T>
void softmax_inplace(T* x, std::int64_t n) {
  if (n == 0) return;
  T mx = -std::numeric_limits<T>::infinity();
  for (std::int64_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  T sum = 0;
  for (std::int64_t j = 0; j < n; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  const T inv = T(1) / sum;
  for (std::int64_t j = 0; j < n; ++j) x[j] *= inv;
}

template <typename T>
void attend_head(const T* q, const T* keys_t, std::int64_t ld_t,
                 const T* values, std::int64_t ld_v, std::int64_t head_dim,
                 std::int64_t n_keys, T scale, T* probs, T* out) {
  std::fill(probs, probs + n_keys, T(0));
  for (std::int64_t d = 0; d < head_dim; ++d) {
    const T qd = q[d];
    const T* __restrict kt = keys_t + d * ld_t;
    T* __restrict s = probs;
    for (std::int64_t j = 0; j < n_keys; ++j) s[j] += qd * kt[j];
  }
  for (std::int64_t j = 0; j < n_keys; ++j) probs[j] *= scale;
  softmax_inplace(probs, n_keys);
  std::fill(out, out + head_dim, T(0));
  for (std::int64_t j = 0; j < n_keys; ++j) {
    const T pj = probs[j];
    const T* __restrict v = values + j * ld_v;
    T* __restrict o = out;
    for (std::int64_t d = 0; d < head_dim; ++d) o[d] += pj * v[d];
  }
}

#define SUBLLM_INSTANTIATE(T)                                                  \
  template void gemm_nn<T>(std::int64_t, std::int64_t, std::int64_t,          \
                           const T*, const T*, T*, bool);                     \
  template void gemm_tn<T>(std::int64_t, std::int64_t, std::int64_t,          \
                           const T*, const T*, T*, bool);                     \
  template void gemm_nt<T>(std::int64_t, std::int64_t, std::int64_t,          \
                           const T*, const T*, T*, bool);                     \
  template void transpose<T>(std::int64_t, std::int64_t, const T*, T*);      \
  template void rope_row<T>(T*, std::int64_t, std::int64_t, const T*,        \
                            const T*, int);                                   \
  template void softmax_inplace<T>(T*, std::int64_t);                          \
  template void attend_head<T>(const T*, const T*, std::int64_t, const T*,    \
                               std::int64_t, std::int64_t, std::int64_t, T,   \
                               T*, T*);

SUBLLM_INSTANTIATE(float)
SUBLLM_INSTANTIATE(double)

#undef SUBLLM_INSTANTIATE

}  // namespace subllm::kernels
