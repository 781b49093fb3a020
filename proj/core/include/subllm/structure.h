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

#include <string>
#include <string_view>
#include <vector>

namespace subllm {

enum class ElementKind { kBlocks, kSubsample, kUpsample, kBypass };

// One '_'-separated token of a structure string: a run of `value` plain
// blocks, or a marker of level `value` (1-based).
struct LayoutElement {
  ElementKind kind;
  int value;

  friend bool operator==(const LayoutElement&, const LayoutElement&) = default;
};

// Parsed structure string such as "5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L".
//
// Levels form a single nested chain S1 .. Sk .. Uk Bk .. U1 B1. The nested
// plan splits the blocks by where they run: down_blocks()[l] blocks run at
// level l before S(l+1) (index k is the innermost middle), up_blocks()[l]
// blocks run at level l after B(l+1).
class StructureLayout {
 public:
  StructureLayout() = default;

  // Canonical layout from 2k+1 plain segment counts: k nested levels with a
  // segment between every pair of consecutive markers.
  static StructureLayout from_segments(const std::vector<int>& segments);

  const std::vector<LayoutElement>& elements() const { return elements_; }
  int total_blocks() const { return total_blocks_; }
  int num_levels() const { return num_levels_; }

  // Plain segment counts in string order.
  std::vector<int> segments() const;
  const std::vector<int>& down_blocks() const { return down_; }
  const std::vector<int>& up_blocks() const { return up_; }
  // Level (0 = full sequence) of each block in execution order.
  std::vector<int> block_levels() const;

  friend bool operator==(const StructureLayout& a, const StructureLayout& b) {
    return a.elements_ == b.elements_;
  }

 private:
  friend StructureLayout parse_structure(std::string_view text);
  explicit StructureLayout(std::vector<LayoutElement> elements);

  std::vector<LayoutElement> elements_;
  int total_blocks_ = 0;
  int num_levels_ = 0;
  std::vector<int> down_;
  std::vector<int> up_;
};

// Throws ParseError (grammar, with token position) or StructureError
// (nesting, naming the level).
StructureLayout parse_structure(std::string_view text);

std::string render_structure(const StructureLayout& layout);

// Symmetric low-variance split of `total_blocks` into 2*levels+1 segments.
// The remainder goes +1 per segment, outermost symmetric pairs first; an
// odd leftover lands on the earlier segment of the next pair inward.
// Throws CapacityError when total_blocks < 2*levels+1.
std::vector<int> plan_segments(int total_blocks, int levels);

// Multi-line human-readable description (segments, levels, pairing).
std::string describe_structure(const StructureLayout& layout);

}  // namespace subllm
