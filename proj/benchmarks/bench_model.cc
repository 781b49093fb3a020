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

#include <string>
#include <vector>

#include "subllm/inference.h"
#include "subllm/model.h"
#include "subllm/ops.h"
#include "subllm/trainer.h"

namespace {

using namespace subllm;

ModelConfig config_for(bool nested) {
  ModelConfig cfg;
  cfg.scorer_init_std = 0.02;
  return nested ? cfg : cfg.baseline();
}

std::vector<int> tokens(std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> ids(static_cast<size_t>(n));
  for (auto& t : ids) t = static_cast<int>(rng.index(256));
  return ids;
}

// One forward and backward pass over a single sequence.
void BM_TrainStep(benchmark::State& state) {
  const bool nested = state.range(1) != 0;
  Model<float> model(config_for(nested), {3, 0});
  const auto ids = tokens(state.range(0) + 1, 4);
  std::span<const int> all(ids);
  Rng rng(5);
  for (auto _ : state) {
    for (auto& p : model.parameters()) p.zero_grad();
    auto out = model.forward(all.first(all.size() - 1), {ForwardMode::kTrain, 0.0, &rng});
    auto loss = cross_entropy(out.logits, all.subspan(1));
    loss.backward();
    benchmark::DoNotOptimize(loss.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.SetLabel(nested ? "nested" : "baseline");
}
BENCHMARK(BM_TrainStep)->Args({128, 0})->Args({128, 1})->Unit(benchmark::kMillisecond);

// Prefill of a prompt followed by cached single-token steps.
void BM_Decode(benchmark::State& state) {
  const bool nested = state.range(1) != 0;
  Model<float> model(config_for(nested), {3, 0});
  const auto ids = tokens(state.range(0) + 32, 6);
  std::span<const int> all(ids);
  for (auto _ : state) {
    InferenceSession<float> s(model);
    s.prefill(all.first(static_cast<size_t>(state.range(0))));
    for (size_t i = static_cast<size_t>(state.range(0)); i < ids.size(); ++i) {
      benchmark::DoNotOptimize(s.decode_step(ids[i]).data().data());
    }
  }
  state.SetItemsProcessed(state.iterations() * (state.range(0) + 32));
  state.SetLabel(nested ? "nested" : "baseline");
}
BENCHMARK(BM_Decode)->Args({256, 0})->Args({256, 1})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
