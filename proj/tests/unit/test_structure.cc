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
#include <string>
#include <vector>

#include "subllm/errors.h"
#include "subllm/rng.h"
#include "subllm/structure.h"

namespace subllm {
namespace {

TEST(ParseStructure, TableStrings) {
  struct Case {
    const char* text;
    int blocks;
    int levels;
    std::vector<int> segments;
  };
  const Case cases[] = {
      {"5L_S1_5L_U1_B1_5L", 15, 1, {5, 5, 5}},
      {"3L_S1_3L_S2_3L_U2_B2_3L_U1_B1_3L", 15, 2, {3, 3, 3, 3, 3}},
      {"5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L", 24, 2, {5, 5, 4, 5, 5}},
  };
  for (const auto& c : cases) {
    auto layout = parse_structure(c.text);
    EXPECT_EQ(layout.total_blocks(), c.blocks) << c.text;
    EXPECT_EQ(layout.num_levels(), c.levels) << c.text;
    EXPECT_EQ(layout.segments(), c.segments) << c.text;
    EXPECT_EQ(render_structure(layout), c.text);
    EXPECT_EQ(render_structure(StructureLayout::from_segments(c.segments)), c.text);
  }
}

TEST(ParseStructure, PlainDecoder) {
  auto layout = parse_structure("12L");
  EXPECT_EQ(layout.num_levels(), 0);
  EXPECT_EQ(layout.total_blocks(), 12);
  EXPECT_EQ(render_structure(StructureLayout::from_segments({12})), "12L");
  EXPECT_EQ(layout.block_levels(), std::vector<int>(12, 0));
}

TEST(ParseStructure, NestedPlan) {
  auto layout = parse_structure("5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L");
  EXPECT_EQ(layout.down_blocks(), (std::vector<int>{5, 5, 4}));
  EXPECT_EQ(layout.up_blocks(), (std::vector<int>{5, 5}));
  const auto lv = layout.block_levels();
  ASSERT_EQ(lv.size(), 24u);
  EXPECT_EQ(std::count(lv.begin(), lv.end(), 0), 10);
  EXPECT_EQ(std::count(lv.begin(), lv.end(), 1), 10);
  EXPECT_EQ(std::count(lv.begin(), lv.end(), 2), 4);
  EXPECT_EQ(lv[4], 0);
  EXPECT_EQ(lv[5], 1);
  EXPECT_EQ(lv[10], 2);
  EXPECT_EQ(lv[14], 1);
  EXPECT_EQ(lv[19], 0);
}

TEST(ParseStructure, GrammarErrors) {
  const char* bad[] = {"", "5L__5L", "5X", "0L", "L", "S", "S0_5L", "5L_Q1", "-3L", "05L"};
  for (const char* t : bad) EXPECT_THROW(parse_structure(t), ParseError) << t;
  try {
    parse_structure("5L_S1_xL_U1_B1");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 2);
  }
  EXPECT_THROW(parse_structure("3L_4L"), ParseError);
}

TEST(ParseStructure, NestingErrors) {
  auto level_of = [](const char* text) {
    try {
      parse_structure(text);
    } catch (const StructureError& e) {
      return e.level();
    }
    return -1;
  };
  EXPECT_EQ(level_of("3L_S1_3L_U2_B2_3L_U1_B1_3L"), 2);  // U2 unmatched
  EXPECT_EQ(level_of("3L_S1_3L_U1_3L"), 1);               // B1 missing
  EXPECT_EQ(level_of("3L_S1_3L_B1_3L"), 1);               // B before U
  EXPECT_EQ(level_of("3L_S2_3L_U2_B2_3L"), 2);            // starts at level 2
  EXPECT_EQ(level_of("3L_S1_3L_S2_3L_U1_B1_3L_U2_B2"), 1);  // crossed pairs
  EXPECT_EQ(level_of("3L_S1_3L"), 1);                       // never closed
  EXPECT_EQ(level_of("3L_S1_3L_U1_B1_S1_3L_U1_B1"), 1);     // repeated level
}

TEST(PlanSegments, TableRows) {
  EXPECT_EQ(plan_segments(15, 1), (std::vector<int>{5, 5, 5}));
  EXPECT_EQ(plan_segments(15, 2), (std::vector<int>{3, 3, 3, 3, 3}));
  EXPECT_EQ(plan_segments(24, 2), (std::vector<int>{5, 5, 4, 5, 5}));
}

TEST(PlanSegments, Properties) {
  for (int k = 0; k <= 4; ++k) {
    for (int total = 2 * k + 1; total <= 60; ++total) {
      const auto seg = plan_segments(total, k);
      ASSERT_EQ(seg.size(), static_cast<size_t>(2 * k + 1));
      int s = 0;
      for (int v : seg) s += v;
      EXPECT_EQ(s, total);
      const auto [lo, hi] = std::minmax_element(seg.begin(), seg.end());
      EXPECT_LE(*hi - *lo, 1);
      EXPECT_GE(*lo, 1);
      const int r = total % (2 * k + 1);
      if (r % 2 == 0) {
        EXPECT_TRUE(std::equal(seg.begin(), seg.end(), seg.rbegin())) << total << "," << k;
      }
      // The middle segment is never larger than any other.
      EXPECT_EQ(seg[static_cast<size_t>(k)], *lo);
    }
  }
}

TEST(PlanSegments, TooFewBlocks) {
  EXPECT_THROW(plan_segments(4, 2), CapacityError);
  EXPECT_THROW(plan_segments(0, 0), CapacityError);
}

// Random layouts, including ones with empty segments between markers.
TEST(RenderStructure, RoundTripRandomLayouts) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = static_cast<int>(rng.index(4));
    std::vector<std::string> toks;
    auto maybe_blocks = [&](bool force) {
      if (force || rng.uniform() < 0.8) toks.push_back(std::to_string(1 + rng.index(9)) + "L");
    };
    maybe_blocks(k == 0);
    for (int l = 1; l <= k; ++l) {
      toks.push_back("S" + std::to_string(l));
      maybe_blocks(l == k);
    }
    for (int l = k; l >= 1; --l) {
      toks.push_back("U" + std::to_string(l));
      toks.push_back("B" + std::to_string(l));
      maybe_blocks(false);
    }
    std::string text;
    for (size_t i = 0; i < toks.size(); ++i) text += (i ? "_" : "") + toks[i];

    const auto layout = parse_structure(text);
    EXPECT_EQ(render_structure(layout), text);
    EXPECT_EQ(parse_structure(render_structure(layout)), layout);
    EXPECT_EQ(layout.num_levels(), k);

    int s_count = 0, u_count = 0, b_count = 0;
    for (const auto& e : layout.elements()) {
      s_count += e.kind == ElementKind::kSubsample;
      u_count += e.kind == ElementKind::kUpsample;
      b_count += e.kind == ElementKind::kBypass;
    }
    EXPECT_EQ(s_count, k);
    EXPECT_EQ(u_count, k);
    EXPECT_EQ(b_count, k);
    EXPECT_EQ(static_cast<int>(layout.block_levels().size()), layout.total_blocks());
  }
}

TEST(DescribeStructure, MentionsLevelsAndPairs) {
  const auto text = describe_structure(parse_structure("5L_S1_5L_U1_B1_5L"));
  EXPECT_NE(text.find("levels: 1"), std::string::npos);
  EXPECT_NE(text.find("blocks: 15"), std::string::npos);
  EXPECT_NE(text.find("segments: 5 5 5"), std::string::npos);
}

}  // namespace
}  // namespace subllm
