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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace subllm {

// Byte-level token ids split into training and validation parts.
struct TokenStream {
  std::vector<int> train;
  std::vector<int> valid;
};

std::vector<int> bytes_to_ids(std::string_view bytes);

// The last n/20 tokens (5%) become the validation split.
TokenStream split_stream(std::vector<int> ids);

// Reads a file as bytes. Throws DataError when unreadable or empty.
TokenStream load_corpus(const std::string& path);

// FNV-1a over the ids, for reload comparisons.
std::uint64_t stream_checksum(std::span<const int> ids);

}  // namespace subllm
