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

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "subllm/errors.h"
#include "subllm/gradcheck.h"
#include "subllm/model.h"

namespace subllm {
namespace {

ModelConfig small_config(const std::string& structure, int blocks, std::vector<double> retention) {
  ModelConfig cfg;
  cfg.vocab_size = 32;
  cfg.width = 16;
  cfg.num_heads = 2;
  cfg.ffn_width = 24;
  cfg.total_blocks = blocks;
  cfg.structure = structure;
  cfg.retention = std::move(retention);
  cfg.context_window = 64;
  return cfg;
}

std::vector<int> random_ids(int n, int vocab, std::uint64_t seed) {
  Rng r(seed);
  std::vector<int> ids(static_cast<size_t>(n));
  for (auto& v : ids) v = static_cast<int>(r.index(static_cast<std::uint64_t>(vocab)));
  return ids;
}

// Copies every parameter the two models share by name.
template <typename T>
void copy_shared(const Model<T>& src, Model<T>& dst) {
  std::map<std::string, Tensor<T>> by_name;
  for (auto& [name, t] : src.named_parameters()) by_name[name] = t;
  for (auto& [name, t] : dst.named_parameters()) {
    auto it = by_name.find(name);
    ASSERT_NE(it, by_name.end()) << name;
    auto d = t.data();
    auto s = std::as_const(it->second).data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

TEST(ModelConfig, Validation) {
  auto cfg = small_config("2L_S1_2L_U1_B1_2L", 6, {0.5});
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.total_blocks = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.retention = {0.5, 0.5};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.num_heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.retention = {0.0};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.structure = "2L_S1_2L_U1_2L";
  EXPECT_THROW(bad.validate(), StructureError);
  EXPECT_NEAR(ModelConfig{}.total_retention(), 0.6325 * 0.6325, 1e-12);
  EXPECT_EQ(ModelConfig{}.baseline().structure, "15L");
}

TEST(Model, PlainDecoderHasNoRecords) {
  auto cfg = small_config("12L", 12, {});
  Model<float> m(cfg, {1, 0});
  Rng rng(1);
  const auto ids = random_ids(10, cfg.vocab_size, 2);
  auto res = m.forward(ids, {ForwardMode::kTrain, 0.0, &rng});
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.logits.shape(), (Shape{10, 32}));
}

TEST(Model, TableLayoutOwnsTwoLevels) {
  auto cfg = small_config("5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L", 24, {0.6325, 0.6325});
  Model<float> m(cfg, {1, 0});
  EXPECT_EQ(m.num_levels(), 2);
  EXPECT_EQ(m.levels().size(), 2u);
  int scorers = 0, bypasses = 0;
  for (auto& [name, t] : m.named_parameters()) {
    scorers += name.find("score_weight") != std::string::npos;
    bypasses += name.find("bypass_c") != std::string::npos;
  }
  EXPECT_EQ(scorers, 2);
  EXPECT_EQ(bypasses, 2);
}

TEST(Model, ExtraParametersPerLevel) {
  auto cfg = small_config("3L_S1_3L_S2_3L_U2_B2_3L_U1_B1_3L", 15, {0.6325, 0.6325});
  Model<float> sub(cfg, {1, 0});
  Model<float> base(cfg.baseline(), {1, 0});
  const std::int64_t c = cfg.width;
  EXPECT_EQ(sub.parameter_count() - base.parameter_count(), 2 * (c + 1) + 2 * c);
}

TEST(Model, InnerLengthsFollowRetention) {
  auto cfg = small_config("1L_S1_1L_S2_1L_U2_B2_1L_U1_B1_1L", 5, {0.6325, 0.6325});
  Model<float> m(cfg, {3, 0});
  Rng rng(4);
  const auto ids = random_ids(32, cfg.vocab_size, 5);
  auto res = m.forward(ids, {ForwardMode::kTrain, 0.0, &rng});
  ASSERT_EQ(res.records.size(), 2u);
  EXPECT_EQ(res.records[0].scores.size(), 32u);
  EXPECT_EQ(res.records[0].kept.size(), 21u);
  EXPECT_EQ(res.records[1].scores.size(), 21u);
  EXPECT_EQ(res.records[1].kept.size(), 14u);
  EXPECT_EQ(res.logits.dim(0), 32);
}

TEST(Model, PositionsComposeThroughLevels) {
  auto cfg = small_config("1L_S1_1L_S2_1L_U2_B2_1L_U1_B1_1L", 5, {0.6, 0.5});
  cfg.scorer_init_std = 0.5;
  Model<float> m(cfg, {6, 0});
  for (auto mode : {ForwardMode::kTrain, ForwardMode::kEval, ForwardMode::kThreshold}) {
    Rng rng(7);
    const auto ids = random_ids(40, cfg.vocab_size, 8);
    auto res = m.forward(ids, {mode, 0.0, &rng});
    ASSERT_EQ(res.records.size(), 2u);
    const auto& p1 = res.records[0].kept_positions;
    const auto& p2 = res.records[1].kept_positions;
    EXPECT_TRUE(std::is_sorted(p1.begin(), p1.end()));
    EXPECT_TRUE(std::adjacent_find(p1.begin(), p1.end()) == p1.end());
    EXPECT_TRUE(std::includes(p1.begin(), p1.end(), p2.begin(), p2.end()));
    for (size_t j = 0; j < p2.size(); ++j) {
      EXPECT_EQ(p2[j], p1[static_cast<size_t>(res.records[1].kept[j])]);
    }
    for (const auto& r : res.records) {
      for (size_t i = 0; i < r.scores.size(); ++i) {
        EXPECT_EQ(r.weights[i], std::clamp(r.scores[i], 0.0, 1.0));
      }
    }
  }
}

TEST(Model, Errors) {
  auto cfg = small_config("1L_S1_1L_U1_B1", 2, {0.5});
  Model<float> m(cfg, {1, 0});
  const std::vector<int> empty;
  EXPECT_THROW(m.forward(empty, {ForwardMode::kEval}), EmptySequenceError);
  const std::vector<int> ids = {1, 2, 3};
  EXPECT_THROW(m.forward(ids, {ForwardMode::kTrain}), ConfigError);
  const std::vector<int> oov = {1, 32};
  EXPECT_THROW(m.forward(oov, {ForwardMode::kEval}), InputError);
  const auto long_ids = random_ids(65, cfg.vocab_size, 1);
  EXPECT_THROW(m.forward(long_ids, {ForwardMode::kEval}), WindowError);
}

TEST(Model, ScorerReceivesGradient) {
  auto cfg = small_config("2L_S1_2L_U1_B1_2L", 6, {0.5});
  Model<float> m(cfg, {1, 0});
  Rng rng(2);
  const auto ids = random_ids(24, cfg.vocab_size, 3);
  auto res = m.forward(ids, {ForwardMode::kTrain, 0.0, &rng});
  std::vector<int> tgt(ids.begin() + 1, ids.end());
  tgt.push_back(0);
  cross_entropy(res.logits, tgt).backward();
  const auto& lp = m.levels()[0];
  ASSERT_TRUE(lp.score_weight.has_grad());
  double norm = 0.0;
  for (float g : lp.score_weight.grad()) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);
  EXPECT_NE(lp.score_bias.grad()[0], 0.0f);
}

TEST(Model, ToyGradcheck) {
  ModelConfig cfg;
  cfg.vocab_size = 11;
  cfg.width = 8;
  cfg.num_heads = 2;
  cfg.ffn_width = 12;
  cfg.total_blocks = 2;
  cfg.structure = "1L_S1_1L_U1_B1";
  cfg.retention = {0.5};
  cfg.context_window = 16;
  cfg.scorer_init_std = 0.0;
  Model<double> m(cfg, {5, 0});
  // Larger weights than the training init so every path carries signal.
  Rng init(9);
  for (auto& [name, t] : m.named_parameters()) {
    if (name.find("norm") != std::string::npos) continue;
    for (auto& v : t.data()) v = init.normal(0.0, 0.3);
  }
  auto& lp = m.levels()[0];
  for (auto& v : lp.score_weight.data()) v = init.normal(0.0, 0.08);
  lp.balancer.lambda = 0.0;  // the penalty is not the gradient of any loss
  for (auto& v : lp.bypass.c.data()) v = init.uniform(0.3, 0.8);
  lp.bypass.c_min = 0.2;
  // Scores spread over (0.1, 0.9) so selection and clamp sit away from kinks.
  lp.score_bias.data()[0] = 0.5;

  const std::vector<int> ids = {3, 7, 1, 9, 4, 2};
  const std::vector<int> tgt = {7, 1, 9, 4, 2, 5};
  auto f = [&] {
    Rng rng(17);
    auto res = m.forward(ids, {ForwardMode::kTrain, 0.0, &rng});
    return cross_entropy(res.logits, tgt);
  };
  {
    Rng rng(17);
    auto res = m.forward(ids, {ForwardMode::kTrain, 0.0, &rng});
    ASSERT_EQ(res.records.size(), 1u);
    for (double s : res.records[0].scores) {
      ASSERT_GT(s, 0.02);
      ASSERT_LT(s, 0.98);
    }
    auto sorted = res.records[0].scores;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 1; i < sorted.size(); ++i) ASSERT_GT(sorted[i] - sorted[i - 1], 1e-4);
  }
  GradcheckOptions opt;
  opt.tolerance = 1e-3;
  auto rep = gradcheck(f, m.parameters(), opt);
  EXPECT_TRUE(rep.passed) << rep.summary();
}

// With w = 1 everywhere and c = 1, the nested model computes exactly what
// the plain decoder computes with the same block weights.
TEST(Model, BaselineEquivalence) {
  auto cfg = small_config("2L_S1_2L_S2_1L_U2_B2_2L_U1_B1_2L", 9, {0.6325, 0.6325});
  Model<double> sub(cfg, {11, 0});
  for (auto& lp : sub.levels()) lp.score_bias.data()[0] = 4.0;  // s = 4, w = 1
  Model<double> base(cfg.baseline(), {0, 0});
  copy_shared(sub, base);
  const auto ids = random_ids(30, cfg.vocab_size, 12);
  const auto want = base.forward(ids, {ForwardMode::kEval}).logits;

  auto thr = sub.forward(ids, {ForwardMode::kThreshold}).logits;
  for (std::int64_t i = 0; i < want.numel(); ++i) ASSERT_EQ(thr[i], want[i]);

  auto full = cfg;
  full.retention = {1.0, 1.0};
  Model<double> sub1(full, {11, 0});
  copy_shared(sub, sub1);
  for (auto& lp : sub1.levels()) lp.score_bias.data()[0] = 4.0;
  Rng rng(3);
  auto tr = sub1.forward(ids, {ForwardMode::kTrain, 0.0, &rng}).logits;
  auto ev = sub1.forward(ids, {ForwardMode::kEval}).logits;
  for (std::int64_t i = 0; i < want.numel(); ++i) {
    ASSERT_EQ(tr[i], want[i]);
    ASSERT_EQ(ev[i], want[i]);
  }

  // 32-bit: same check within 1e-5.
  Model<float> subf(cfg, {11, 0});
  for (auto& lp : subf.levels()) lp.score_bias.data()[0] = 4.0f;
  Model<float> basef(cfg.baseline(), {0, 0});
  copy_shared(subf, basef);
  auto a = subf.forward(ids, {ForwardMode::kThreshold}).logits;
  auto b = basef.forward(ids, {ForwardMode::kEval}).logits;
  for (std::int64_t i = 0; i < a.numel(); ++i) ASSERT_NEAR(a[i], b[i], 1e-5);
}

TEST(Model, CausalUnderThresholdSelection) {
  auto cfg = small_config("1L_S1_1L_S2_1L_U2_B2_1L_U1_B1_1L", 5, {0.6325, 0.6325});
  cfg.scorer_init_std = 0.5;
  Model<double> m(cfg, {21, 0});
  auto ids = random_ids(20, cfg.vocab_size, 22);
  const auto a = m.forward(ids, {ForwardMode::kThreshold}).logits;
  for (int t : {19, 12, 5}) {
    auto probe = ids;
    probe[static_cast<size_t>(t)] = (probe[static_cast<size_t>(t)] + 7) % cfg.vocab_size;
    const auto b = m.forward(probe, {ForwardMode::kThreshold}).logits;
    const auto v = cfg.vocab_size;
    for (std::int64_t i = 0; i < t * v; ++i) ASSERT_EQ(a[i], b[i]) << "perturbed " << t;
  }
}

TEST(Model, PlainDecoderCausalInEveryMode) {
  auto cfg = small_config("3L", 3, {});
  Model<double> m(cfg, {2, 0});
  auto ids = random_ids(16, cfg.vocab_size, 4);
  for (auto mode : {ForwardMode::kTrain, ForwardMode::kEval, ForwardMode::kThreshold}) {
    Rng r1(1), r2(1);
    const auto a = m.forward(ids, {mode, 0.0, &r1}).logits;
    auto probe = ids;
    probe[10] = (probe[10] + 1) % cfg.vocab_size;
    const auto b = m.forward(probe, {mode, 0.0, &r2}).logits;
    for (std::int64_t i = 0; i < 10 * cfg.vocab_size; ++i) ASSERT_EQ(a[i], b[i]);
  }
}

// Attention logits on a subsampled sequence, rotated by the kept tokens'
// absolute positions, match the full sequence's logits restricted to the
// kept rows and columns.
TEST(Model, SubsampledAttentionMatchesRestriction) {
  const std::int64_t n = 8, c = 8;
  RopeTable<double> table(c, 10000.0, 32);
  Rng rng(30);
  std::vector<double> qd(n * c), kd(n * c);
  for (auto& v : qd) v = rng.uniform(-1, 1);
  for (auto& v : kd) v = rng.uniform(-1, 1);
  auto q = Tensor<double>::from_data({n, c}, qd);
  auto k = Tensor<double>::from_data({n, c}, kd);
  std::vector<std::int64_t> all(n);
  for (std::int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
  const std::vector<std::int64_t> kept = {0, 2, 5, 6};
  auto logits = [&](const Tensor<double>& qq, const Tensor<double>& kk,
                    std::span<const std::int64_t> pos) {
    auto rq = rope(qq, pos, table);
    auto rk = rope(kk, pos, table);
    return matmul(rq, transpose(rk));
  };
  auto full = logits(q, k, all);
  auto sub = logits(index_select(q, 0, kept), index_select(k, 0, kept), kept);
  for (size_t i = 0; i < kept.size(); ++i) {
    for (size_t j = 0; j < kept.size(); ++j) {
      EXPECT_NEAR(sub[static_cast<std::int64_t>(i * kept.size() + j)],
                  full[kept[i] * n + kept[j]], 1e-12);
    }
  }
}

TEST(Model, EvalIsDeterministic) {
  auto cfg = small_config("2L_S1_2L_U1_B1_2L", 6, {0.5});
  cfg.scorer_init_std = 0.3;
  Model<float> m(cfg, {1, 0});
  const auto ids = random_ids(30, cfg.vocab_size, 9);
  auto a = m.forward(ids, {ForwardMode::kEval}).logits;
  auto b = m.forward(ids, {ForwardMode::kEval}).logits;
  for (std::int64_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a[i], b[i]);
}

TEST(Model, CopyParametersConvertsTypes) {
  auto cfg = small_config("2L_S1_2L_U1_B1_2L", 6, {0.5});
  Model<float> f(cfg, {1, 0});
  Model<double> d(cfg, {2, 0});
  copy_parameters(f, d);
  const auto fp = f.named_parameters();
  const auto dp = d.named_parameters();
  for (size_t i = 0; i < fp.size(); ++i) {
    for (std::int64_t j = 0; j < fp[i].second.numel(); ++j) {
      EXPECT_EQ(static_cast<double>(fp[i].second[j]), dp[i].second[j]);
    }
  }
}

}  // namespace
}  // namespace subllm
