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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "subllm/model.h"

namespace subllm::cli {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct BenchOptions {
  ModelConfig model;             // SUBLLM shape; the baseline drops its levels
  std::vector<int> windows = {256, 512, 1024};
  int reps = 5;                  // timed train steps per model and window
  int decode_tokens = 32;        // decode timing after a prompt of window/2
  bool decode = true;
  double threshold = 0.0;
  std::uint64_t seed = 1;
};

struct BenchRow {
  int window = 0;
  std::string model;  // "baseline" or "subllm"
  std::string structure;
  double train_tokens_per_s = 0.0;
  double decode_tokens_per_s = 0.0;
  std::int64_t param_elements = 0;
  std::int64_t activation_elements = 0;
  std::int64_t cache_elements = 0;
  double memory_bytes = 0.0;
  double flops_per_token = 0.0;
  double flops_ratio = 1.0;     // analytic baseline / subllm
  double measured_ratio = 1.0;  // median over reps of baseline / subllm step time
};

// Paired fresh-init timing of forward+backward (training mode) and cached
// decoding for a baseline and a SUBLLM model at every window. Baseline and
// SUBLLM steps alternate so drift affects both alike; medians are reported.
std::vector<BenchRow> run_bench(const BenchOptions& options);
std::string bench_header();
std::string bench_line(const BenchRow& row);

// Analytic element counts behind the memory column.
std::int64_t activation_elements(const ModelConfig& cfg, std::int64_t window);
std::int64_t cache_elements(const ModelConfig& cfg, std::int64_t window);

struct AttentionDump {
  int block = 0;
  int block_level = 0;
  int levels = 0;
  std::int64_t prompt_length = 0;
  std::vector<std::int64_t> positions;  // rows/columns of the matrix
  std::vector<double> matrix;           // head-averaged, positions x positions
  // kept[l][p]: prompt position p entered level l+1.
  std::vector<std::vector<bool>> kept;
  // Fraction of the top 40% columns by attention mass (over the matrix's
  // positions) that the next subsampler keeps; -1 when no subsampler follows.
  double overlap = -1.0;
};

// Threshold-mode forward over the prompt with attention captured at
// `block`. Throws IndexError for an invalid block.
AttentionDump dump_attention(const Model<float>& model, const std::vector<int>& prompt, int block,
                             double threshold);
// Header: pos,kept_l1..kept_lk,attn_<p> for every matrix position; one row
// per prompt position, attention cells empty where the block did not run.
void write_attention_csv(std::ostream& out, const AttentionDump& dump);

// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace subllm::cli
