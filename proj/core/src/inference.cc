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

#include "subllm/inference.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "subllm/errors.h"
#include "subllm/rng.h"

namespace subllm {

template <typename T>
std::int64_t KVCacheSet<T>::total_entries() const {
  std::int64_t n = 0;
  for (const auto& b : blocks) n += b.length;
  return n;
}

template <typename T>
InferenceSession<T>::InferenceSession(const Model<T>& model, double threshold)
    : model_(&model), threshold_(threshold) {
  reset();
}

template <typename T>
void InferenceSession<T>::reset() {
  const auto& cfg = model_->config();
  caches_.blocks.assign(static_cast<size_t>(model_->num_blocks()), BlockCache<T>{});
  for (auto& b : caches_.blocks) b.reset(cfg.width, cfg.context_window);
  caches_.tokens = 0;
  caches_.level_kept.assign(static_cast<size_t>(model_->num_levels()), 0);
  decisions_.assign(static_cast<size_t>(model_->num_levels()), {});
}

template <typename T>
Tensor<T> InferenceSession<T>::feed(std::span<const int> ids) {
  auto res = model_->forward_cached(ids, caches_.tokens, threshold_, caches_.blocks);
  caches_.tokens += static_cast<std::int64_t>(ids.size());
  for (const auto& r : res.records) {
    const auto l = static_cast<size_t>(r.level - 1);
    caches_.level_kept[l] += static_cast<std::int64_t>(r.kept.size());
    std::vector<bool> flags(r.scores.size(), false);
    for (auto i : r.kept) flags[static_cast<size_t>(i)] = true;
    decisions_[l].insert(decisions_[l].end(), flags.begin(), flags.end());
  }
  return res.logits;
}

template <typename T>
Tensor<T> InferenceSession<T>::prefill(std::span<const int> prompt) {
  if (static_cast<std::int64_t>(prompt.size()) + caches_.tokens > model_->config().context_window) {
    throw WindowError("prompt of " + std::to_string(prompt.size()) +
                      " tokens exceeds the context window of " +
                      std::to_string(model_->config().context_window));
  }
  return feed(prompt);
}

template <typename T>
Tensor<T> InferenceSession<T>::decode_step(int token) {
  const int ids[1] = {token};
  return feed(ids);
}

template <typename T>
RetentionReport InferenceSession<T>::retention() const {
  RetentionReport r;
  r.tokens = caches_.tokens;
  r.kept = caches_.level_kept;
  for (auto k : r.kept) {
    r.fraction.push_back(r.tokens ? static_cast<double>(k) / static_cast<double>(r.tokens) : 0.0);
  }
  return r;
}

std::string TimingReport::csv_header() {
  return "model,structure,N_prompt,new_tokens,first_token_ms,tokens_per_s,retention_level1,"
         "retention_level2,peak_cache_entries";
}

std::string TimingReport::csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%lld,%lld,%.6g,%.6g,%.6g,%.6g,%lld", model.c_str(),
                structure.c_str(), static_cast<long long>(n_prompt),
                static_cast<long long>(new_tokens), first_token_ms, tokens_per_s,
                retention_level1, retention_level2, static_cast<long long>(peak_cache_entries));
  return buf;
}

namespace {

template <typename T>
int pick_token(std::span<const T> logits, const GenRequest& req, Rng& rng) {
  if (req.greedy) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  const double inv_t = 1.0 / req.temperature;
  double mx = -INFINITY;
  for (T v : logits) mx = std::max(mx, static_cast<double>(v) * inv_t);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) * inv_t - mx);
    z += p[i];
  }
  double u = rng.uniform() * z;
  for (size_t i = 0; i < p.size(); ++i) {
    u -= p[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

template <typename T>
std::span<const T> last_row(const Tensor<T>& logits) {
  const auto v = logits.dim(1);
  return logits.data().subspan(static_cast<size_t>((logits.dim(0) - 1) * v),
                               static_cast<size_t>(v));
}

}  // namespace

template <typename T>
GenerateResult generate(const Model<T>& model, const GenRequest& req, const std::string& label) {
  if (req.max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
  if (req.prompt.empty()) throw ConfigError("prompt must not be empty");
  if (!req.greedy && !(req.temperature > 0.0)) throw ConfigError("temperature must be positive");
  const auto total = static_cast<std::int64_t>(req.prompt.size()) + req.max_new_tokens - 1;
  if (total > model.config().context_window) {
    throw WindowError("prompt plus new tokens (" + std::to_string(total) +
                      ") exceed the context window of " +
                      std::to_string(model.config().context_window));
  }
  using clock = std::chrono::steady_clock;
  Rng rng(req.seed);
  InferenceSession<T> session(model, req.threshold);
  GenerateResult out;

  const auto t0 = clock::now();
  auto logits = session.prefill(req.prompt);
  out.tokens.push_back(pick_token<T>(last_row(logits), req, rng));
  const auto t1 = clock::now();
  for (int i = 1; i < req.max_new_tokens; ++i) {
    logits = session.decode_step(out.tokens.back());
    out.tokens.push_back(pick_token<T>(last_row(logits), req, rng));
  }
  const auto t2 = clock::now();

  auto& tr = out.timing;
  tr.model = label;
  tr.structure = model.config().structure;
  tr.n_prompt = static_cast<std::int64_t>(req.prompt.size());
  tr.new_tokens = req.max_new_tokens;
  tr.first_token_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  const double decode_s = std::chrono::duration<double>(t2 - t1).count();
  tr.tokens_per_s = req.max_new_tokens > 1 && decode_s > 0.0
                        ? static_cast<double>(req.max_new_tokens - 1) / decode_s
                        : 0.0;
  const auto ret = session.retention();
  tr.retention_level1 = ret.fraction.size() > 0 ? ret.fraction[0] : 1.0;
  tr.retention_level2 = ret.fraction.size() > 1 ? ret.fraction[1] : tr.retention_level1;
  tr.peak_cache_entries = session.caches().total_entries();
  return out;
}

template <typename T>
GenerateResult generate_timed(const Model<T>& model, const GenRequest& req, int runs,
                              const std::string& label) {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  std::vector<double> first, speed;
  GenerateResult last;
  for (int r = 0; r < runs; ++r) {
    last = generate(model, req, label);
    first.push_back(last.timing.first_token_ms);
    speed.push_back(last.timing.tokens_per_s);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  last.timing.first_token_ms = median(first);
  last.timing.tokens_per_s = median(speed);
  return last;
}

template struct KVCacheSet<float>;
template struct KVCacheSet<double>;
template class InferenceSession<float>;
template class InferenceSession<double>;
template GenerateResult generate(const Model<float>&, const GenRequest&, const std::string&);
template GenerateResult generate(const Model<double>&, const GenRequest&, const std::string&);
template GenerateResult generate_timed(const Model<float>&, const GenRequest&, int,
                                       const std::string&);
template GenerateResult generate_timed(const Model<double>&, const GenRequest&, int,
                                       const std::string&);

}  // namespace subllm
