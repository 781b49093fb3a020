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

#include "subllm/structure.h"

#include <charconv>
#include <sstream>

#include "subllm/errors.h"

namespace subllm {

namespace {

std::vector<std::string_view> split_tokens(std::string_view text) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = text.find('_', start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Parses a positive decimal integer occupying all of `digits`.
bool parse_positive(std::string_view digits, int& value) {
  if (digits.empty() || digits.front() == '0') return false;
  for (char ch : digits) {
    if (ch < '0' || ch > '9') return false;
  }
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  return ec == std::errc() && ptr == digits.data() + digits.size() && value > 0;
}

LayoutElement parse_token(std::string_view tok, int position) {
  auto fail = [&](const std::string& why) -> LayoutElement {
    throw ParseError("token " + std::to_string(position) + " '" + std::string(tok) + "': " + why,
                     position);
  };
  if (tok.empty()) return fail("empty token");
  int value = 0;
  if (tok.back() == 'L') {
    if (!parse_positive(tok.substr(0, tok.size() - 1), value)) {
      return fail("expected a positive block count before 'L'");
    }
    return {ElementKind::kBlocks, value};
  }
  ElementKind kind;
  switch (tok.front()) {
    case 'S': kind = ElementKind::kSubsample; break;
    case 'U': kind = ElementKind::kUpsample; break;
    case 'B': kind = ElementKind::kBypass; break;
    default: return fail("expected <int>L, S<int>, U<int> or B<int>");
  }
  if (!parse_positive(tok.substr(1), value)) return fail("expected a positive level index");
  return {kind, value};
}

char marker_letter(ElementKind kind) {
  switch (kind) {
    case ElementKind::kSubsample: return 'S';
    case ElementKind::kUpsample: return 'U';
    case ElementKind::kBypass: return 'B';
    case ElementKind::kBlocks: break;
  }
  return 'L';
}

}  // namespace

StructureLayout::StructureLayout(std::vector<LayoutElement> elements)
    : elements_(std::move(elements)) {
  int level = 0;
  bool ascending = true;
  for (const auto& e : elements_) {
    switch (e.kind) {
      case ElementKind::kBlocks:
        total_blocks_ += e.value;
        if (ascending) {
          if (static_cast<int>(down_.size()) <= level) down_.resize(level + 1, 0);
          down_[level] += e.value;
        } else {
          up_[level] += e.value;
        }
        break;
      case ElementKind::kSubsample:
        if (static_cast<int>(down_.size()) <= level) down_.resize(level + 1, 0);
        level = e.value;
        num_levels_ = level;
        break;
      case ElementKind::kUpsample:
        if (ascending) {
          if (static_cast<int>(down_.size()) <= level) down_.resize(level + 1, 0);
          up_.assign(num_levels_, 0);
          ascending = false;
        }
        break;
      case ElementKind::kBypass:
        level = e.value - 1;
        break;
    }
  }
  if (static_cast<int>(down_.size()) <= num_levels_) down_.resize(num_levels_ + 1, 0);
  up_.resize(num_levels_, 0);
}

StructureLayout StructureLayout::from_segments(const std::vector<int>& segments) {
  if (segments.empty() || segments.size() % 2 == 0) {
    throw StructureError("segment list must have odd length 2k+1", 0);
  }
  const int k = static_cast<int>(segments.size() / 2);
  std::vector<LayoutElement> el;
  for (int i = 0; i < static_cast<int>(segments.size()); ++i) {
    if (segments[i] <= 0) throw StructureError("segment counts must be positive", 0);
    el.push_back({ElementKind::kBlocks, segments[i]});
    if (i < k) {
      el.push_back({ElementKind::kSubsample, i + 1});
    } else if (i < 2 * k) {
      const int lvl = 2 * k - i;
      el.push_back({ElementKind::kUpsample, lvl});
      el.push_back({ElementKind::kBypass, lvl});
    }
  }
  return StructureLayout(std::move(el));
}

std::vector<int> StructureLayout::segments() const {
  std::vector<int> out;
  for (const auto& e : elements_) {
    if (e.kind == ElementKind::kBlocks) out.push_back(e.value);
  }
  return out;
}

std::vector<int> StructureLayout::block_levels() const {
  std::vector<int> out;
  for (int l = 0; l <= num_levels_; ++l) out.insert(out.end(), down_[l], l);
  for (int l = num_levels_ - 1; l >= 0; --l) out.insert(out.end(), up_[l], l);
  return out;
}

StructureLayout parse_structure(std::string_view text) {
  const auto tokens = split_tokens(text);
  std::vector<LayoutElement> elements;
  int opened = 0;          // deepest S seen so far
  int open_top = 0;        // innermost level still awaiting its U
  bool closing = false;    // a U has been seen
  int pending_bypass = 0;  // level of a U that still needs its B
  for (int p = 0; p < static_cast<int>(tokens.size()); ++p) {
    const auto el = parse_token(tokens[p], p);
    const auto lvl = el.value;
    if (pending_bypass != 0 &&
        !(el.kind == ElementKind::kBypass && lvl == pending_bypass)) {
      throw StructureError("U" + std::to_string(pending_bypass) + " must be followed by B" +
                               std::to_string(pending_bypass),
                           pending_bypass);
    }
    switch (el.kind) {
      case ElementKind::kBlocks:
        if (!elements.empty() && elements.back().kind == ElementKind::kBlocks) {
          throw ParseError("token " + std::to_string(p) +
                               ": adjacent block segments must be written as one",
                           p);
        }
        break;
      case ElementKind::kSubsample:
        if (closing) {
          throw StructureError("S" + std::to_string(lvl) + " appears after an upsampler", lvl);
        }
        if (lvl != opened + 1) {
          throw StructureError("S" + std::to_string(lvl) + " out of order, expected S" +
                                   std::to_string(opened + 1),
                               lvl);
        }
        opened = lvl;
        open_top = lvl;
        break;
      case ElementKind::kUpsample:
        if (lvl != open_top || open_top == 0) {
          throw StructureError("U" + std::to_string(lvl) + " unmatched", lvl);
        }
        closing = true;
        pending_bypass = lvl;
        --open_top;
        break;
      case ElementKind::kBypass:
        if (lvl != pending_bypass) {
          throw StructureError("B" + std::to_string(lvl) + " without a preceding U" +
                                   std::to_string(lvl),
                               lvl);
        }
        pending_bypass = 0;
        break;
    }
    elements.push_back(el);
  }
  if (pending_bypass != 0) {
    throw StructureError("U" + std::to_string(pending_bypass) + " must be followed by B" +
                             std::to_string(pending_bypass),
                         pending_bypass);
  }
  if (open_top != 0) {
    throw StructureError("S" + std::to_string(open_top) + " has no matching U" +
                             std::to_string(open_top),
                         open_top);
  }
  bool any_blocks = false;
  for (const auto& e : elements) any_blocks |= e.kind == ElementKind::kBlocks;
  if (!any_blocks) throw StructureError("structure has no blocks", 0);
  return StructureLayout(std::move(elements));
}

std::string render_structure(const StructureLayout& layout) {
  std::string out;
  for (const auto& e : layout.elements()) {
    if (!out.empty()) out += '_';
    if (e.kind == ElementKind::kBlocks) {
      out += std::to_string(e.value) + "L";
    } else {
      out += marker_letter(e.kind);
      out += std::to_string(e.value);
    }
  }
  return out;
}

std::vector<int> plan_segments(int total_blocks, int levels) {
  if (levels < 0) throw CapacityError("negative level count");
  const int parts = 2 * levels + 1;
  if (total_blocks < parts) {
    throw CapacityError(std::to_string(total_blocks) + " blocks cannot host " +
                        std::to_string(levels) + " levels (need at least " +
                        std::to_string(parts) + ")");
  }
  std::vector<int> seg(parts, total_blocks / parts);
  int rem = total_blocks % parts;
  for (int pair = 0; pair < levels && rem > 0; ++pair) {
    if (rem >= 2) {
      ++seg[pair];
      ++seg[parts - 1 - pair];
      rem -= 2;
    } else {
      ++seg[pair];
      rem = 0;
    }
  }
  if (rem > 0) seg[levels] += rem;
  return seg;
}

std::string describe_structure(const StructureLayout& layout) {
  std::ostringstream os;
  os << "structure: " << render_structure(layout) << '\n';
  os << "blocks: " << layout.total_blocks() << '\n';
  os << "levels: " << layout.num_levels() << '\n';
  os << "segments:";
  for (int s : layout.segments()) os << ' ' << s;
  os << '\n';
  int block = 0;
  const int k = layout.num_levels();
  for (int l = 0; l <= k; ++l) {
    const int n = layout.down_blocks()[l];
    if (l > 0) os << "S" << l << " subsamples before block " << block << '\n';
    if (n > 0) {
      os << "level " << l << ": blocks " << block << "-" << block + n - 1 << '\n';
    }
    block += n;
  }
  for (int l = k - 1; l >= 0; --l) {
    os << "U" << l + 1 << "+B" << l + 1 << " restore level " << l << " before block " << block
       << " (paired with S" << l + 1 << ")\n";
    const int n = layout.up_blocks()[l];
    if (n > 0) {
      os << "level " << l << ": blocks " << block << "-" << block + n - 1 << '\n';
    }
    block += n;
  }
  return os.str();
}

}  // namespace subllm
