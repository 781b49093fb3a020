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

#include "subllm/checkpoint.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "subllm/errors.h"

namespace subllm {

namespace {

constexpr char kMagic[5] = {'S', 'U', 'B', 'L', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},         {"width", c.width},
          {"num_heads", c.num_heads},           {"ffn_width", c.ffn_width},
          {"total_blocks", c.total_blocks},     {"structure", c.structure},
          {"retention", c.retention},           {"rope_theta", c.rope_theta},
          {"context_window", c.context_window}, {"scorer_init_std", c.scorer_init_std}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.width = j.at("width").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ffn_width = j.at("ffn_width").get<int>();
  c.total_blocks = j.at("total_blocks").get<int>();
  c.structure = j.at("structure").get<std::string>();
  c.retention = j.at("retention").get<std::vector<double>>();
  c.rope_theta = j.at("rope_theta").get<double>();
  c.context_window = j.at("context_window").get<int>();
  c.scorer_init_std = j.value("scorer_init_std", 0.0);
  return c;
}

struct RawCheckpoint {
  CheckpointInfo info;
  std::streamoff data_offset = 0;
};

RawCheckpoint read_header(std::ifstream& in, const std::string& path) {
  char magic[5] = {};
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0) {
    throw CheckpointError("'" + path + "' is not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 30)) throw CheckpointError("'" + path + "': bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("'" + path + "': truncated header");
  RawCheckpoint raw;
  try {
    const auto j = nlohmann::json::parse(text);
    raw.info.config = config_from_json(j.at("config"));
    raw.info.rng.seed = j.at("rng").at("seed").get<std::uint64_t>();
    raw.info.rng.position = j.at("rng").at("position").get<std::uint64_t>();
    raw.info.step = j.at("step").get<std::int64_t>();
    for (const auto& p : j.at("params")) {
      raw.info.params.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("'" + path + "': malformed header: " + e.what());
  }
  raw.data_offset = in.tellg();
  return raw;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const RngState& rng,
                     std::int64_t step) {
  nlohmann::json header;
  header["config"] = config_to_json(model.config());
  header["rng"] = {{"seed", rng.seed}, {"position", rng.position}};
  header["step"] = step;
  auto params = nlohmann::json::array();
  const auto named = model.named_parameters();
  for (const auto& [name, t] : named) params.push_back({{"name", name}, {"shape", t.shape()}});
  header["params"] = params;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, 5);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<float> buf;
    for (const auto& [name, t] : named) {
      const auto d = t.data();
      buf.assign(d.begin(), d.end());
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("failed while writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_header(in, path).info;
}

template <typename T>
Model<T> load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  auto raw = read_header(in, path);
  Model<T> model;
  try {
    model = Model<T>(raw.info.config, raw.info.rng);
  } catch (const Error& e) {
    throw CheckpointError("'" + path + "': stored config is invalid: " + e.what());
  }
  auto named = model.named_parameters();
  if (named.size() != raw.info.params.size()) {
    throw CheckpointError("'" + path + "': parameter table has " +
                          std::to_string(raw.info.params.size()) + " entries, expected " +
                          std::to_string(named.size()));
  }
  for (size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != raw.info.params[i].first ||
        named[i].second.shape() != raw.info.params[i].second) {
      throw CheckpointError("'" + path + "': parameter " + raw.info.params[i].first + " " +
                            shape_to_string(raw.info.params[i].second) + " does not match " +
                            named[i].first + " " + shape_to_string(named[i].second.shape()));
    }
  }
  std::vector<float> buf;
  for (auto& [name, t] : named) {
    buf.resize(static_cast<size_t>(t.numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw CheckpointError("'" + path + "': truncated at parameter " + name);
    auto d = t.data();
    for (size_t j = 0; j < buf.size(); ++j) d[j] = static_cast<T>(buf[j]);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("'" + path + "': trailing bytes after parameters");
  }
  if (info) *info = std::move(raw.info);
  return model;
}

template void save_checkpoint(const std::string&, const Model<float>&, const RngState&,
                              std::int64_t);
template void save_checkpoint(const std::string&, const Model<double>&, const RngState&,
                              std::int64_t);
template Model<float> load_checkpoint(const std::string&, CheckpointInfo*);
template Model<double> load_checkpoint(const std::string&, CheckpointInfo*);

}  // namespace subllm
