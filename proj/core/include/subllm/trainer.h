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

// Byte-level language-model training: batching, loss, Adam, the
// warmup-cosine learning-rate schedule, bypass scheduling, checkpoints and
// metrics.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "subllm/corpus.h"
#include "subllm/model.h"
#include "subllm/rng.h"

namespace subllm {

struct TrainConfig {
  std::string corpus_path;
  int batch_size = 8;
  int sequence_length = 256;
  std::int64_t total_steps = 5000;
  std::int64_t warmup_steps = 200;
  double peak_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global norm; <= 0 disables
  std::uint64_t seed = 1;
  std::int64_t eval_interval = 250;
  int eval_windows = 16;   // validation windows per evaluation
  std::int64_t bypass_warm_steps = 20000;
  std::string metrics_path;     // empty: no metrics file
  std::string checkpoint_path;  // empty: no checkpoints

  void validate(const ModelConfig& model) const;
};

// Linear warmup to peak_lr at warmup_steps, then cosine decay to
// 0.1 * peak_lr at total_steps (held there afterwards).
double lr_at(std::int64_t step, const TrainConfig& cfg);

struct LevelStats {
  double retention = 0.0;          // realized |I| / N in training
  double positive_fraction = 0.0;  // p of the pre-clamp scores
  double mean_abs_score = 0.0;     // a
  double mean_c = 0.0;             // mean bypass weight
  double threshold_keep = 0.0;     // kept / incoming under s > 0 on validation
  double threshold_reach = 0.0;    // fraction of all tokens reaching the level
};

struct MetricsRow {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
  std::vector<LevelStats> levels;
  double tokens_per_s = 0.0;  // written to the timing sidecar only
};

// Header and row of the metrics CSV (deterministic columns only).
std::string metrics_header(int levels);
std::string metrics_line(const MetricsRow& row);

// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor<float>> params, double beta1, double beta2, double eps);
  // Applies one update with the gradients currently held by the parameters.
  void step(double lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor<float>> params_;
  std::vector<std::vector<float>> m_, v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::vector<SubsampleRecord> records;  // from the batch's sequences
};

struct ThresholdStats {
  std::vector<double> keep;   // per level: kept / incoming
  std::vector<double> reach;  // per level: tokens reaching / all tokens
};

class Trainer {
 public:
  Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg, TokenStream corpus);

  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const TokenStream& corpus() const { return corpus_; }
  std::int64_t step() const { return step_; }

  // One optimizer step on a freshly sampled batch. Throws DivergenceError
  // on a non-finite loss, before any parameter is touched.
  StepResult train_step();

  // Mean next-token loss over the first eval_windows non-overlapping
  // windows of `stream` (default: the validation split), top-k selection
  // without sampling.
  double evaluate() const;
  double evaluate(std::span<const int> stream) const;

  // Threshold-mode (s > 0) retention over the same validation windows.
  ThresholdStats threshold_stats() const;

  // Runs to total_steps, writing metrics rows at step 0 and every
  // eval_interval, plus checkpoints. `on_row` sees every row.
  std::vector<MetricsRow> run(const std::function<void(const MetricsRow&)>& on_row = {});

  void save(const std::string& path) const;

 private:
  std::vector<std::vector<int>> sample_batch();
  std::vector<std::span<const int>> windows(std::span<const int> stream) const;

  ModelConfig model_cfg_;
  TrainConfig cfg_;
  TokenStream corpus_;
  Model<float> model_;
  Adam adam_;
  Rng data_rng_;
  Rng sample_rng_;
  std::int64_t step_ = 0;
};

}  // namespace subllm
