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

// Cached autoregressive decoding with per-token threshold selection.
//
// Each block keeps keys and values only for the tokens that reached it, so
// blocks inside level l hold as many entries as there were tokens with
// s > v at every enclosing subsampler.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "subllm/model.h"

namespace subllm {

template <typename T>
struct KVCacheSet {
  std::vector<BlockCache<T>> blocks;
  std::int64_t tokens = 0;               // tokens consumed at level 0
  std::vector<std::int64_t> level_kept;  // per level: tokens that entered it

  std::int64_t total_entries() const;
};

struct RetentionReport {
  std::int64_t tokens = 0;
  std::vector<std::int64_t> kept;   // per level, cumulative reach count
  std::vector<double> fraction;     // kept / tokens
};

template <typename T>
class InferenceSession {
 public:
  InferenceSession(const Model<T>& model, double threshold = 0.0);

  // Feeds the whole prompt in one pass. Returns logits of every prompt
  // position ([N x V]).
  Tensor<T> prefill(std::span<const int> prompt);
  // Feeds one token; returns its logits ([1 x V]).
  Tensor<T> decode_step(int token);

  const KVCacheSet<T>& caches() const { return caches_; }
  RetentionReport retention() const;
  // Keep/drop flags of every token fed so far, per level (true = entered).
  const std::vector<std::vector<bool>>& decisions() const { return decisions_; }
  void reset();

 private:
  Tensor<T> feed(std::span<const int> ids);

  const Model<T>* model_;
  double threshold_;
  KVCacheSet<T> caches_;
  // decisions_[l][t]: did the t-th token that reached level l enter level l+1.
  std::vector<std::vector<bool>> decisions_;
};

struct GenRequest {
  std::vector<int> prompt;
  int max_new_tokens = 1;
  double threshold = 0.0;
  bool greedy = true;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct TimingReport {
  std::string model;
  std::string structure;
  std::int64_t n_prompt = 0;
  std::int64_t new_tokens = 0;
  double first_token_ms = 0.0;
  double tokens_per_s = 0.0;        // non-first tokens
  double retention_level1 = 1.0;
  double retention_level2 = 1.0;
  std::int64_t peak_cache_entries = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct GenerateResult {
  std::vector<int> tokens;  // generated tokens only
  TimingReport timing;
};

// Greedy or temperature sampling. Throws ConfigError for an invalid request
// and WindowError when prompt + new tokens exceed the context window.
template <typename T>
GenerateResult generate(const Model<T>& model, const GenRequest& req,
                        const std::string& label = "model");

// Runs `generate` `runs` times and reports the median first-token latency
// and median throughput (tokens and retention come from the last run).
template <typename T>
GenerateResult generate_timed(const Model<T>& model, const GenRequest& req, int runs = 5,
                              const std::string& label = "model");

}  // namespace subllm
