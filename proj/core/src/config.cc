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

#include "subllm/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "subllm/errors.h"

namespace subllm {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, std::string_view text) {
  N value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

std::vector<double> parse_list(const std::string& key, std::string_view text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  size_t start = 0;
  while (true) {
    const auto pos = text.find(',', start);
    out.push_back(parse_number<double>(key, trim(text.substr(start, pos - start))));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, std::string_view)>;

template <typename N, typename Field>
Setter number(Field field) {
  return [field](RunConfig& c, const std::string& k, std::string_view v) {
    field(c) = parse_number<N>(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"vocab_size", number<int>([](RunConfig& c) -> int& { return c.model.vocab_size; })},
      {"width", number<int>([](RunConfig& c) -> int& { return c.model.width; })},
      {"num_heads", number<int>([](RunConfig& c) -> int& { return c.model.num_heads; })},
      {"ffn_width", number<int>([](RunConfig& c) -> int& { return c.model.ffn_width; })},
      {"total_blocks", number<int>([](RunConfig& c) -> int& { return c.model.total_blocks; })},
      {"structure",
       [](RunConfig& c, const std::string&, std::string_view v) { c.model.structure = v; }},
      {"retention",
       [](RunConfig& c, const std::string& k, std::string_view v) {
         c.model.retention = parse_list(k, v);
       }},
      {"rope_theta", number<double>([](RunConfig& c) -> double& { return c.model.rope_theta; })},
      {"context_window",
       number<int>([](RunConfig& c) -> int& { return c.model.context_window; })},
      {"scorer_init_std",
       number<double>([](RunConfig& c) -> double& { return c.model.scorer_init_std; })},
      {"corpus_path",
       [](RunConfig& c, const std::string&, std::string_view v) { c.train.corpus_path = v; }},
      {"batch_size", number<int>([](RunConfig& c) -> int& { return c.train.batch_size; })},
      {"sequence_length",
       number<int>([](RunConfig& c) -> int& { return c.train.sequence_length; })},
      {"total_steps",
       number<std::int64_t>([](RunConfig& c) -> std::int64_t& { return c.train.total_steps; })},
      {"warmup_steps",
       number<std::int64_t>([](RunConfig& c) -> std::int64_t& { return c.train.warmup_steps; })},
      {"peak_lr", number<double>([](RunConfig& c) -> double& { return c.train.peak_lr; })},
      {"beta1", number<double>([](RunConfig& c) -> double& { return c.train.beta1; })},
      {"beta2", number<double>([](RunConfig& c) -> double& { return c.train.beta2; })},
      {"eps", number<double>([](RunConfig& c) -> double& { return c.train.eps; })},
      {"grad_clip", number<double>([](RunConfig& c) -> double& { return c.train.grad_clip; })},
      {"seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"eval_interval",
       number<std::int64_t>([](RunConfig& c) -> std::int64_t& { return c.train.eval_interval; })},
      {"eval_windows", number<int>([](RunConfig& c) -> int& { return c.train.eval_windows; })},
      {"bypass_warm_steps", number<std::int64_t>([](RunConfig& c) -> std::int64_t& {
         return c.train.bypass_warm_steps;
       })},
      {"metrics_path",
       [](RunConfig& c, const std::string&, std::string_view v) { c.train.metrics_path = v; }},
      {"checkpoint_path",
       [](RunConfig& c, const std::string&, std::string_view v) {
         c.train.checkpoint_path = v;
       }},
  };
  return table;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  int line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto raw = text.substr(start, end == std::string_view::npos ? end : end - start);
    ++line_no;
    const auto line = trim(raw);
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key(trim(line.substr(0, eq)));
      if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      if (out.count(key)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                          "'");
      }
      out[key] = std::string(trim(line.substr(eq + 1)));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  for (const auto& [key, value] : parse_key_values(text)) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string render_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  os << "vocab_size = " << m.vocab_size << '\n'
     << "width = " << m.width << '\n'
     << "num_heads = " << m.num_heads << '\n'
     << "ffn_width = " << m.ffn_width << '\n'
     << "total_blocks = " << m.total_blocks << '\n'
     << "structure = " << m.structure << '\n'
     << "retention = ";
  for (size_t i = 0; i < m.retention.size(); ++i) os << (i ? "," : "") << m.retention[i];
  os << '\n'
     << "rope_theta = " << m.rope_theta << '\n'
     << "context_window = " << m.context_window << '\n'
     << "scorer_init_std = " << m.scorer_init_std << '\n'
     << "corpus_path = " << t.corpus_path << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "sequence_length = " << t.sequence_length << '\n'
     << "total_steps = " << t.total_steps << '\n'
     << "warmup_steps = " << t.warmup_steps << '\n'
     << "peak_lr = " << t.peak_lr << '\n'
     << "beta1 = " << t.beta1 << '\n'
     << "beta2 = " << t.beta2 << '\n'
     << "eps = " << t.eps << '\n'
     << "grad_clip = " << t.grad_clip << '\n'
     << "seed = " << t.seed << '\n'
     << "eval_interval = " << t.eval_interval << '\n'
     << "eval_windows = " << t.eval_windows << '\n'
     << "bypass_warm_steps = " << t.bypass_warm_steps << '\n'
     << "metrics_path = " << t.metrics_path << '\n'
     << "checkpoint_path = " << t.checkpoint_path << '\n';
  return os.str();
}

}  // namespace subllm
