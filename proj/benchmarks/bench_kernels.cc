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

#include <benchmark/benchmark.h>

#include <vector>

#include "subllm/ops.h"
#include "subllm/rng.h"

namespace {

using subllm::Rng;
using subllm::Tensor;

Tensor<float> random_matrix(std::int64_t rows, std::int64_t cols, Rng& rng) {
  std::vector<float> v(static_cast<size_t>(rows * cols));
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return Tensor<float>::from_data({rows, cols}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  auto a = random_matrix(n, 128, rng);
  auto b = random_matrix(128, 128, rng);
  for (auto _ : state) {
    auto c = subllm::matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * n * 128 * 128 * 2);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(1024);

void BM_CausalAttention(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(2);
  auto q = random_matrix(n, 128, rng);
  auto k = random_matrix(n, 128, rng);
  auto v = random_matrix(n, 128, rng);
  for (auto _ : state) {
    auto y = subllm::causal_attention(q, k, v, 8);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_CausalAttention)->Arg(128)->Arg(256)->Arg(512);

}  // namespace
