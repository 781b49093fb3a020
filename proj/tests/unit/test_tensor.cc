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

#include <cmath>
#include <vector>

#include "subllm/errors.h"
#include "subllm/gradcheck.h"
#include "subllm/ops.h"
#include "subllm/rng.h"
#include "subllm/tensor.h"

namespace subllm {
namespace {

using TD = Tensor<double>;

TD random_leaf(Shape shape, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return TD::from_data(std::move(shape), std::move(v), true);
}

TEST(Tensor, ShapeAndData) {
  auto t = Tensor<float>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2);
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(1), 3);
  EXPECT_FLOAT_EQ(t[4], 5.0f);
  EXPECT_THROW(Tensor<float>::from_data({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, HandlesShareStorage) {
  auto a = Tensor<float>::zeros({3});
  auto b = a;
  b.data()[1] = 7.0f;
  EXPECT_FLOAT_EQ(a[1], 7.0f);
  EXPECT_TRUE(a.same_node(b));
  auto c = a.detach();
  c.data()[1] = 1.0f;
  EXPECT_FLOAT_EQ(a[1], 7.0f);
}

TEST(Tensor, GradHasDataShape) {
  auto x = TD::from_data({2, 2}, {1, 2, 3, 4}, true);
  auto y = sum(mul(x, x));
  y.backward();
  ASSERT_TRUE(x.has_grad());
  ASSERT_EQ(x.grad().size(), 4u);
  EXPECT_DOUBLE_EQ(x.grad()[3], 8.0);
}

TEST(Tensor, SharedSubexpressionVisitedOnce) {
  // y = u * u with u = 3x: dy/dx = 18x, which double-visiting u would break.
  auto x = TD::from_data({1}, {2.0}, true);
  auto u = scale(x, 3.0);
  auto y = sum(mul(u, u));
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 36.0);
}

TEST(Tensor, AccumulationOrderIsExactForTrees) {
  Rng rng(3);
  auto a = random_leaf({4, 3}, rng);
  auto b = random_leaf({4, 3}, rng);
  auto f1 = sum(add(mul(a, b), mul(b, a)));
  f1.backward();
  std::vector<double> g1(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  auto f2 = sum(add(mul(b, a), mul(a, b)));
  f2.backward();
  for (size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i], a.grad()[i]);
}

TEST(Tensor, NoGradGuardSkipsGraph) {
  auto x = TD::from_data({2}, {1, 2}, true);
  TD y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(Rng, ReplaysFromState) {
  Rng a(42);
  for (int i = 0; i < 17; ++i) a.next_u64();
  auto s = a.state();
  EXPECT_EQ(s.position, 17u);
  auto b = Rng::from_state(s);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, IdenticalSeedsGiveIdenticalDraws) {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.index(13), b.index(13));
  }
}

TEST(Rng, IndexStaysInRange) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.index(7), 7u);
  EXPECT_THROW(r.index(0), ConfigError);
}

TEST(Gradcheck, MatmulSumPasses) {
  Rng rng(5);
  auto w = random_leaf({3, 4}, rng);
  auto x = random_leaf({4, 2}, rng);
  auto rep = gradcheck([&] { return sum(matmul(w, x)); }, {w, x});
  EXPECT_TRUE(rep.passed) << rep.summary();
  EXPECT_EQ(rep.elements_checked, 20);
}

TEST(Gradcheck, ClampInteriorPasses) {
  auto x = TD::from_data({4}, {0.1, 0.4, 0.6, 0.9}, true);
  auto rep = gradcheck([&] { return sum(clamp01(x)); }, {x});
  EXPECT_TRUE(rep.passed) << rep.summary();
}

TEST(Gradcheck, FreshRandomnessIsRejected) {
  auto x = TD::from_data({2}, {0.3, 0.5}, true);
  std::uint64_t calls = 0;
  auto f = [&] {
    Rng r(++calls);
    return sum(scale(x, r.uniform()));
  };
  EXPECT_THROW(gradcheck(f, {x}), OracleInvalidError);
}

TEST(Gradcheck, ReportsAWrongGradient) {
  auto x = TD::from_data({3}, {0.2, -0.4, 0.7}, true);
  auto f = [&] {
    // Identity forward, doubled gradient.
    auto y = custom_grad<double>(x, [](std::span<const double>, std::span<double> g) {
      for (auto& v : g) v *= 2.0;
    });
    return sum(mul(y, y));
  };
  auto rep = gradcheck(f, {x});
  EXPECT_FALSE(rep.passed);
  EXPECT_NEAR(rep.max_rel_error, 0.5, 1e-6);
}

}  // namespace
}  // namespace subllm
