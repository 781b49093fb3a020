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

// Flat `key = value` run configuration. Lines starting with '#' and blank
// lines are ignored; keys are the field names of ModelConfig and
// TrainConfig; `retention` is a comma-separated list. Unknown keys and
// malformed values raise ConfigError naming the line.

#include <map>
#include <string>
#include <string_view>

#include "subllm/model.h"
#include "subllm/trainer.h"

namespace subllm {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

std::map<std::string, std::string> parse_key_values(std::string_view text);

// Keys not present keep their defaults. Does not validate cross-field
// consistency; call ModelConfig::validate / TrainConfig::validate.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

std::string render_run_config(const RunConfig& cfg);

}  // namespace subllm
