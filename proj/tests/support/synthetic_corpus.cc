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

#include "synthetic_corpus.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "subllm/rng.h"

namespace subllm::testing {

namespace {

const char* const kLexicon[] = {
    "the", "of", "and", "to", "a", "in", "is", "that", "it", "was", "for", "on", "are", "as",
    "with", "his", "they", "at", "be", "this", "from", "have", "or", "by", "one", "had", "not",
    "but", "what", "all", "were", "when", "we", "there", "can", "an", "your", "which", "their",
    "said", "if", "do", "will", "each", "about", "how", "up", "out", "them", "then", "she",
    "many", "some", "so", "these", "would", "other", "into", "has", "more", "her", "two",
    "like", "him", "see", "time", "could", "no", "make", "than", "first", "been", "its", "who",
    "now", "people", "my", "made", "over", "did", "down", "only", "way", "find", "use", "may",
    "water", "long", "little", "very", "after", "words", "called", "just", "where", "most",
    "know", "river", "mountain", "village", "garden", "morning", "evening", "winter", "summer",
    "letter", "window", "market", "bridge", "station", "teacher", "student", "history",
    "science", "music", "language", "number", "between", "through", "under", "against",
    "during", "without", "before", "because", "however", "although", "together", "another",
    "several", "small", "large", "early", "quiet", "bright", "heavy", "ancient", "simple",
    "walked", "carried", "opened", "noticed", "remembered", "explained", "followed", "built",
    "learned", "answered", "travelled", "watched", "listened", "returned", "decided",
};

constexpr std::size_t kLexiconSize = sizeof(kLexicon) / sizeof(kLexicon[0]);

}  // namespace

std::string synthetic_text(std::size_t min_bytes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> cdf(kLexiconSize);
  double total = 0.0;
  for (std::size_t i = 0; i < kLexiconSize; ++i) {
    total += 1.0 / std::pow(static_cast<double>(i + 1), 1.05);
    cdf[i] = total;
  }
  auto word = [&]() -> std::string {
    const double u = rng.uniform() * total;
    std::size_t lo = 0;
    while (cdf[lo] < u) ++lo;
    return kLexicon[lo];
  };
  std::string out;
  out.reserve(min_bytes + 256);
  while (out.size() < min_bytes) {
    const auto sentences = 2 + rng.index(5);
    for (std::uint64_t s = 0; s < sentences; ++s) {
      const auto words = 4 + rng.index(12);
      for (std::uint64_t w = 0; w < words; ++w) {
        std::string tok = rng.uniform() < 0.03 ? std::to_string(rng.index(2000)) : word();
        if (w == 0 && tok[0] >= 'a' && tok[0] <= 'z') tok[0] = static_cast<char>(tok[0] - 32);
        out += tok;
        if (w + 1 < words) out += rng.uniform() < 0.08 ? ", " : " ";
      }
      out += rng.uniform() < 0.1 ? "? " : ". ";
    }
    out.back() = '\n';
    out += '\n';
  }
  return out;
}

std::string ensure_corpus_file(const std::string& path, std::size_t min_bytes,
                               std::uint64_t seed) {
  std::error_code ec;
  if (std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) >= min_bytes) {
    return path;
  }
  std::ofstream(path, std::ios::binary | std::ios::trunc) << synthetic_text(min_bytes, seed);
  return path;
}

}  // namespace subllm::testing
