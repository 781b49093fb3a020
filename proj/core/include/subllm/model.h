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

// Decoder-only transformer assembled from a structure layout.
//
// Blocks are pre-norm (RMS norm, rotary multi-head attention, SiLU-gated
// feed-forward). Every subsampling level owns a scorer, a balancer config,
// a retention ratio and a bypass state. Tokens keep their original absolute
// positions through every selection, so rotary phases inside inner levels
// reflect true distances.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "subllm/ops.h"
#include "subllm/rng.h"
#include "subllm/structure.h"
#include "subllm/subsample.h"
#include "subllm/tensor.h"

namespace subllm {

struct ModelConfig {
  int vocab_size = 256;
  int width = 128;
  int num_heads = 8;
  int ffn_width = 344;
  int total_blocks = 15;
  std::string structure = "3L_S1_3L_S2_3L_U2_B2_3L_U1_B1_3L";
  std::vector<double> retention = {0.6325, 0.6325};
  double rope_theta = 10000.0;
  int context_window = 512;
  // Standard deviation of the scorer's initial weights. Zero gives the
  // all-zero scorer; a positive value is used where scores must start
  // distinct (gradient checks, fresh-init benchmarks).
  double scorer_init_std = 0.0;

  // Throws ConfigError / ParseError / StructureError.
  void validate() const;
  StructureLayout layout() const;
  int head_dim() const { return width / num_heads; }
  // Product of the per-level retention ratios.
  double total_retention() const;
  // Same shape with every subsampling level removed.
  ModelConfig baseline() const;
};

enum class ForwardMode {
  kTrain,      // top-k selection, balancer, sampled scaling
  kEval,       // top-k selection, w_scaling = w_kept, no randomness
  kThreshold,  // keep iff s > threshold, w_scaling = w_kept
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::kTrain;
  double threshold = 0.0;
  Rng* rng = nullptr;           // required in kTrain
  int capture_block = -1;       // block whose attention probabilities to keep
};

// Per-block key/value history used by cached decoding. Keys are stored
// transposed ([C x capacity]) so the score loop runs over contiguous keys.
template <typename T>
struct BlockCache {
  std::int64_t capacity = 0;
  std::int64_t length = 0;
  std::int64_t width = 0;
  std::vector<T> keys_t;
  std::vector<T> values;
  std::vector<std::int64_t> positions;

  void reset(std::int64_t width_, std::int64_t capacity_);
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;                         // [N x V]
  std::vector<SubsampleRecord> records;     // outer level first, one per event
  // Filled when ForwardOptions::capture_block names a block that ran.
  std::vector<T> attention;                 // [heads x n x n]
  std::vector<std::int64_t> attention_positions;  // absolute positions of the n rows
};

template <typename T>
struct BlockParams {
  Tensor<T> attn_norm, wq, wk, wv, wo;
  Tensor<T> ffn_norm, w_gate, w_up, w_down;
};

template <typename T>
struct LevelParams {
  Tensor<T> score_weight;  // [C x 1]
  Tensor<T> score_bias;    // [1]
  BypassState<T> bypass;
  BalancerConfig balancer;
  double retention = 1.0;
};

template <typename T>
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, const RngState& seed);

  const ModelConfig& config() const { return cfg_; }
  const StructureLayout& layout() const { return layout_; }
  int num_levels() const { return layout_.num_levels(); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  // Level of each block in execution order.
  const std::vector<int>& block_levels() const { return block_levels_; }

  // Parameters in a fixed order (checkpoint order).
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::int64_t parameter_count() const;

  std::vector<LevelParams<T>>& levels() { return levels_; }
  const std::vector<LevelParams<T>>& levels() const { return levels_; }
  std::vector<BlockParams<T>>& blocks() { return blocks_; }
  const RopeTable<T>& rope_table() const { return rope_; }

  // Full-sequence forward pass. Positions are 0..N-1.
  ForwardResult<T> forward(std::span<const int> ids, const ForwardOptions& options) const;

  // Forward over new tokens that continue the sequence held in `caches`
  // (one per block), the first new token sitting at absolute position
  // `start`. Always uses threshold selection and records no graph.
  ForwardResult<T> forward_cached(std::span<const int> ids, std::int64_t start, double threshold,
                                  std::vector<BlockCache<T>>& caches) const;

 private:
  struct Context;

  Tensor<T> run_level(int level, Tensor<T> x, std::vector<std::int64_t> positions,
                      Context& ctx) const;
  Tensor<T> run_block(int index, const Tensor<T>& x, std::span<const std::int64_t> positions,
                      Context& ctx) const;
  Tensor<T> head(const Tensor<T>& x) const;

  ModelConfig cfg_;
  StructureLayout layout_;
  std::vector<int> block_levels_;
  std::vector<int> down_offset_;  // first block index of each level's down run
  std::vector<int> up_offset_;    // first block index of each level's up run
  Tensor<T> embed_;               // [V x C]
  std::vector<BlockParams<T>> blocks_;
  Tensor<T> final_norm_;          // [C]
  Tensor<T> lm_head_;             // [C x V]
  std::vector<LevelParams<T>> levels_;
  RopeTable<T> rope_;
};

extern template class Model<float>;
extern template class Model<double>;

// Loads every parameter of `src` into `dst` (same config), converting the
// element type.
template <typename T, typename U>
void copy_parameters(const Model<U>& src, Model<T>& dst);

}  // namespace subllm
