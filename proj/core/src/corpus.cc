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

#include "subllm/corpus.h"

#include <fstream>
#include <iterator>

#include "subllm/errors.h"

namespace subllm {

std::vector<int> bytes_to_ids(std::string_view bytes) {
  std::vector<int> ids;
  ids.reserve(bytes.size());
  for (char ch : bytes) ids.push_back(static_cast<unsigned char>(ch));
  return ids;
}

TokenStream split_stream(std::vector<int> ids) {
  const size_t n_valid = ids.size() / 20;
  TokenStream out;
  out.valid.assign(ids.end() - static_cast<std::ptrdiff_t>(n_valid), ids.end());
  ids.resize(ids.size() - n_valid);
  out.train = std::move(ids);
  return out;
}

TokenStream load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("data error: cannot read corpus '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw DataError("data error: corpus '" + path + "' is empty");
  return split_stream(bytes_to_ids(bytes));
}

std::uint64_t stream_checksum(std::span<const int> ids) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int id : ids) {
    h ^= static_cast<std::uint64_t>(id) & 0xffU;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace subllm
