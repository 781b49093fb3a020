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

#include "subllm/flops.h"

#include "subllm/errors.h"

namespace subllm {

namespace {

double block_linear(double m, double c, double f) { return 2.0 * m * (4.0 * c * c + 3.0 * c * f); }
double block_attention(double m, double c) { return 2.0 * m * (m + 1.0) * c; }

}  // namespace

FlopsEstimate flops_per_token(const ModelConfig& cfg, std::span<const double> retention,
                              std::int64_t n) {
  if (n <= 0) throw ConfigError("sequence length must be positive");
  const auto layout = cfg.layout();
  if (static_cast<int>(retention.size()) != layout.num_levels()) {
    throw ConfigError("expected one retention ratio per level");
  }
  const double c = cfg.width, f = cfg.ffn_width, v = cfg.vocab_size;
  const double full = static_cast<double>(n);
  std::vector<double> reach(retention.size() + 1, 1.0);
  for (size_t l = 0; l < retention.size(); ++l) reach[l + 1] = reach[l] * retention[l];

  double sub = 0.0, kept_linear = 0.0;
  for (int level : layout.block_levels()) {
    const double m = full * reach[level];
    sub += block_linear(m, c, f) + block_attention(m, c);
    kept_linear += reach[level];
  }
  const int blocks = layout.total_blocks();
  double base = blocks * (block_linear(full, c, f) + block_attention(full, c));
  const double head = 2.0 * full * c * v;
  sub += head;
  base += head;

  FlopsEstimate out;
  out.subllm = 3.0 * sub / full;
  out.baseline = 3.0 * base / full;
  out.ratio = out.baseline / out.subllm;
  out.block_fraction = blocks > 0 ? kept_linear / blocks : 1.0;
  return out;
}

}  // namespace subllm
