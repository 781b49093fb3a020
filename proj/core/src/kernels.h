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

// Dense kernels shared by the autodiff ops and the cached inference path.
//
// Every kernel accumulates each output element over its reduction index in
// ascending order, one multiply and one add per term. Results therefore do
// not depend on how many rows are processed per call, which is what makes
// single-token decoding bit-identical to a batched prefill.

#include <cstdint>
#include <span>

namespace subllm::kernels {

// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             const T* b, T* c, bool accumulate);

// C[M x N] (+)= A^T * B with A stored [K x M], B stored [K x N]
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             const T* b, T* c, bool accumulate);

// C[M x N] (+)= A[M x K] * B^T with B stored [N x K]
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             const T* b, T* c, bool accumulate);

template <typename T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst);

// Rotary embedding of one row of `width` channels split into heads of
// `head_dim`; pair (2i, 2i+1) of every head rotates by the angle whose
// cosine/sine are cs[i]/sn[i]. `sign` = -1 applies the inverse rotation.
template <typename T>
void rope_row(T* row, std::int64_t width, std::int64_t head_dim, const T* cs,
              const T* sn, int sign);

// Numerically stable in-place softmax over n entries.
template <typename T>
void softmax_inplace(T* x, std::int64_t n);

// One query row attending over `n_keys` keys for a single head. Keys are
// stored transposed (row d of `keys_t` holds channel d of every key, stride
// `ld_t`); values are rows with stride `ld_v`, already offset to the head.
// Writes the probabilities (length n_keys) and the head output.
template <typename T>
void attend_head(const T* q, const T* keys_t, std::int64_t ld_t,
                 const T* values, std::int64_t ld_v, std::int64_t head_dim,
                 std::int64_t n_keys, T scale, T* probs, T* out);

}  // namespace subllm::kernels
