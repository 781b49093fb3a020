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

#include <gtest/gtest.h>

#include <vector>

#include "subllm/errors.h"
#include "subllm/flops.h"

namespace subllm {
namespace {

ModelConfig shape(const std::string& structure, int blocks) {
  ModelConfig cfg;
  cfg.structure = structure;
  cfg.total_blocks = blocks;
  return cfg;
}

TEST(Flops, TwentyFourBlockFraction) {
  auto cfg = shape("5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L", 24);
  const std::vector<double> d = {0.6325, 0.6325};
  const auto est = flops_per_token(cfg, d, 2048);
  // (10 * 1 + 10 * 0.6325 + 4 * 0.4) / 24
  EXPECT_NEAR(est.block_fraction, 0.747, 5e-4);
  EXPECT_NEAR(1.0 / est.block_fraction, 1.34, 5e-3);
  EXPECT_GT(est.ratio, 1.2);
  EXPECT_LT(est.ratio, 1.5);
}

TEST(Flops, FullRetentionIsNeutral) {
  auto cfg = shape("3L_S1_3L_S2_3L_U2_B2_3L_U1_B1_3L", 15);
  const std::vector<double> d = {1.0, 1.0};
  for (std::int64_t n : {1, 256, 1024}) {
    const auto est = flops_per_token(cfg, d, n);
    EXPECT_EQ(est.ratio, 1.0);
    EXPECT_EQ(est.subllm, est.baseline);
    EXPECT_EQ(est.block_fraction, 1.0);
  }
}

TEST(Flops, HandCountedSingleBlock) {
  ModelConfig cfg;
  cfg.width = 2;
  cfg.num_heads = 1;
  cfg.ffn_width = 3;
  cfg.vocab_size = 5;
  cfg.total_blocks = 1;
  cfg.structure = "1L";
  cfg.retention = {};
  // Linear 2*4*(4*4 + 3*2*3) = 272, attention 2*4*5*2 = 80, head 2*4*2*5 = 80.
  const auto est = flops_per_token(cfg, {}, 4);
  EXPECT_DOUBLE_EQ(est.baseline, 3.0 * (272 + 80 + 80) / 4.0);
  EXPECT_DOUBLE_EQ(est.subllm, est.baseline);
}

TEST(Flops, AttentionUsesLevelLength) {
  ModelConfig cfg;
  cfg.width = 4;
  cfg.num_heads = 1;
  cfg.ffn_width = 1;
  cfg.vocab_size = 1;
  cfg.total_blocks = 3;
  cfg.structure = "1L_S1_1L_U1_B1_1L";
  cfg.retention = {0.5};
  const std::vector<double> d = {0.5};
  const std::int64_t n = 100;
  const auto est = flops_per_token(cfg, d, n);
  auto block = [&](double m) { return 2 * m * (4 * 16 + 3 * 4) + 2 * m * (m + 1) * 4; };
  const double head = 2.0 * n * 4;
  EXPECT_DOUBLE_EQ(est.subllm, 3 * (2 * block(100) + block(50) + head) / n);
  EXPECT_DOUBLE_EQ(est.baseline, 3 * (3 * block(100) + head) / n);
}

TEST(Flops, RatioGrowsWithWindow) {
  auto cfg = shape("3L_S1_3L_S2_3L_U2_B2_3L_U1_B1_3L", 15);
  const std::vector<double> d = {0.6325, 0.6325};
  double prev = 0.0;
  for (std::int64_t n : {256, 512, 1024, 2048}) {
    const double r = flops_per_token(cfg, d, n).ratio;
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(Flops, Errors) {
  auto cfg = shape("5L_S1_5L_U1_B1_5L", 15);
  const std::vector<double> two = {0.5, 0.5};
  EXPECT_THROW(flops_per_token(cfg, two, 16), ConfigError);
  const std::vector<double> one = {0.5};
  EXPECT_THROW(flops_per_token(cfg, one, 0), ConfigError);
}

}  // namespace
}  // namespace subllm
