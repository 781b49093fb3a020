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

// Checkpoint file layout:
//   "SUBL1"                         5 magic bytes
//   uint64 little-endian            length of the JSON header in bytes
//   JSON header                     {"config", "params": [{"name", "shape"}],
//                                    "rng": {"seed", "position"}, "step"}
//   float32 little-endian values    every parameter, in header order

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "subllm/model.h"
#include "subllm/rng.h"

namespace subllm {

struct CheckpointInfo {
  ModelConfig config;
  RngState rng;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, Shape>> params;
};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const RngState& rng,
                     std::int64_t step);

// Reads only the header. Throws CheckpointError on unknown magic or a
// malformed header.
CheckpointInfo read_checkpoint_info(const std::string& path);

// Rebuilds the model from the stored config and loads its parameters.
// Throws CheckpointError when the stored parameter table does not match
// the table the config implies, or the file is truncated.
template <typename T>
Model<T> load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

}  // namespace subllm
