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

#include "subllm/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.h"
#include "subllm/errors.h"

namespace subllm {

void ModelConfig::validate() const {
  if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
  if (width <= 0 || num_heads <= 0) throw ConfigError("width and num_heads must be positive");
  if (width % num_heads != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (head_dim() % 2 != 0) throw ConfigError("head dimension must be even for rotary embedding");
  if (ffn_width <= 0) throw ConfigError("ffn_width must be positive");
  if (context_window <= 0) throw ConfigError("context_window must be positive");
  if (!(rope_theta > 0.0)) throw ConfigError("rope_theta must be positive");
  if (scorer_init_std < 0.0) throw ConfigError("scorer_init_std must be non-negative");
  const auto lay = parse_structure(structure);
  if (lay.total_blocks() != total_blocks) {
    throw ConfigError("structure '" + structure + "' has " + std::to_string(lay.total_blocks()) +
                      " blocks but total_blocks = " + std::to_string(total_blocks));
  }
  if (static_cast<int>(retention.size()) != lay.num_levels()) {
    throw ConfigError("structure has " + std::to_string(lay.num_levels()) + " levels but " +
                      std::to_string(retention.size()) + " retention ratios were given");
  }
  for (double d : retention) {
    if (!(d > 0.0 && d <= 1.0)) throw ConfigError("retention ratios must lie in (0, 1]");
  }
}

StructureLayout ModelConfig::layout() const { return parse_structure(structure); }

double ModelConfig::total_retention() const {
  double r = 1.0;
  for (double d : retention) r *= d;
  return r;
}

ModelConfig ModelConfig::baseline() const {
  ModelConfig b = *this;
  b.structure = std::to_string(total_blocks) + "L";
  b.retention.clear();
  return b;
}

template <typename T>
void BlockCache<T>::reset(std::int64_t width_, std::int64_t capacity_) {
  width = width_;
  capacity = capacity_;
  length = 0;
  keys_t.assign(static_cast<size_t>(width * capacity), T(0));
  values.assign(static_cast<size_t>(width * capacity), T(0));
  positions.clear();
  positions.reserve(static_cast<size_t>(capacity));
}

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::vector<T> data(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
struct Model<T>::Context {
  const ForwardOptions* options = nullptr;
  std::vector<BlockCache<T>>* caches = nullptr;
  ForwardResult<T>* result = nullptr;
};

template <typename T>
Model<T>::Model(const ModelConfig& cfg, const RngState& seed) : cfg_(cfg) {
  cfg_.validate();
  layout_ = cfg_.layout();
  block_levels_ = layout_.block_levels();
  const int k = layout_.num_levels();
  down_offset_.assign(k + 1, 0);
  up_offset_.assign(k, 0);
  int idx = 0;
  for (int l = 0; l <= k; ++l) {
    down_offset_[l] = idx;
    idx += layout_.down_blocks()[l];
  }
  for (int l = k - 1; l >= 0; --l) {
    up_offset_[l] = idx;
    idx += layout_.up_blocks()[l];
  }

  const std::int64_t c = cfg_.width, f = cfg_.ffn_width, v = cfg_.vocab_size;
  const double std0 = 0.02;
  const double std_out = std0 / std::sqrt(2.0 * std::max(1, cfg_.total_blocks));
  Rng rng = Rng::from_state(seed);
  embed_ = normal_tensor<T>({v, c}, std0, rng);
  blocks_.resize(static_cast<size_t>(cfg_.total_blocks));
  for (auto& b : blocks_) {
    b.attn_norm = Tensor<T>::full({c}, T(1), true);
    b.wq = normal_tensor<T>({c, c}, std0, rng);
    b.wk = normal_tensor<T>({c, c}, std0, rng);
    b.wv = normal_tensor<T>({c, c}, std0, rng);
    b.wo = normal_tensor<T>({c, c}, std_out, rng);
    b.ffn_norm = Tensor<T>::full({c}, T(1), true);
    b.w_gate = normal_tensor<T>({c, f}, std0, rng);
    b.w_up = normal_tensor<T>({c, f}, std0, rng);
    b.w_down = normal_tensor<T>({f, c}, std_out, rng);
  }
  final_norm_ = Tensor<T>::full({c}, T(1), true);
  lm_head_ = normal_tensor<T>({c, v}, std0, rng);
  levels_.resize(static_cast<size_t>(k));
  for (int l = 0; l < k; ++l) {
    auto& lp = levels_[l];
    lp.retention = cfg_.retention[l];
    lp.balancer = BalancerConfig::for_retention(lp.retention);
    lp.score_weight = cfg_.scorer_init_std > 0.0
                          ? normal_tensor<T>({c, 1}, cfg_.scorer_init_std, rng)
                          : Tensor<T>::zeros({c, 1}, true);
    lp.score_bias = Tensor<T>::zeros({1}, true);
    lp.bypass.c = Tensor<T>::full({c}, T(1), true);
  }
  rope_ = RopeTable<T>(cfg_.head_dim(), cfg_.rope_theta, cfg_.context_window);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.emplace_back("embed", embed_);
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const auto p = "blocks." + std::to_string(i) + ".";
    const auto& b = blocks_[i];
    out.emplace_back(p + "attn_norm", b.attn_norm);
    out.emplace_back(p + "wq", b.wq);
    out.emplace_back(p + "wk", b.wk);
    out.emplace_back(p + "wv", b.wv);
    out.emplace_back(p + "wo", b.wo);
    out.emplace_back(p + "ffn_norm", b.ffn_norm);
    out.emplace_back(p + "w_gate", b.w_gate);
    out.emplace_back(p + "w_up", b.w_up);
    out.emplace_back(p + "w_down", b.w_down);
  }
  out.emplace_back("final_norm", final_norm_);
  out.emplace_back("lm_head", lm_head_);
  for (size_t l = 0; l < levels_.size(); ++l) {
    const auto p = "levels." + std::to_string(l + 1) + ".";
    out.emplace_back(p + "score_weight", levels_[l].score_weight);
    out.emplace_back(p + "score_bias", levels_[l].score_bias);
    out.emplace_back(p + "bypass_c", levels_[l].bypass.c);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
std::int64_t Model<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

template <typename T>
Tensor<T> Model<T>::run_block(int index, const Tensor<T>& x,
                              std::span<const std::int64_t> positions, Context& ctx) const {
  const auto& b = blocks_[index];
  const std::int64_t c = cfg_.width;
  const std::int64_t heads = cfg_.num_heads;
  auto h = rms_norm(x, b.attn_norm);
  auto q = rope(matmul(h, b.wq), positions, rope_);
  auto k = rope(matmul(h, b.wk), positions, rope_);
  auto v = matmul(h, b.wv);
  Tensor<T> attn;
  if (ctx.caches != nullptr) {
    auto& cache = (*ctx.caches)[index];
    const std::int64_t n = x.dim(0);
    const std::int64_t len0 = cache.length;
    if (len0 + n > cache.capacity) {
      throw WindowError("key/value cache of block " + std::to_string(index) + " is full (" +
                        std::to_string(cache.capacity) + " entries)");
    }
    auto kd = k.data();
    auto vd = v.data();
    for (std::int64_t i = 0; i < n; ++i) {
      if (!cache.positions.empty() && positions[i] <= cache.positions.back()) {
        throw IndexError("cache positions must be strictly ascending");
      }
      cache.positions.push_back(positions[i]);
      for (std::int64_t d = 0; d < c; ++d) {
        cache.keys_t[d * cache.capacity + len0 + i] = kd[i * c + d];
      }
      std::copy(vd.begin() + i * c, vd.begin() + (i + 1) * c,
                cache.values.begin() + (len0 + i) * c);
    }
    cache.length = len0 + n;
    const std::int64_t hd = c / heads;
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(hd));
    std::vector<T> out(static_cast<size_t>(n * c));
    std::vector<T> probs(static_cast<size_t>(cache.length));
    auto qd = q.data();
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t hh = 0; hh < heads; ++hh) {
        kernels::attend_head(qd.data() + i * c + hh * hd, cache.keys_t.data() + hh * hd * cache.capacity,
                             cache.capacity, cache.values.data() + hh * hd, c, hd, len0 + i + 1,
                             scale_factor, probs.data(), out.data() + i * c + hh * hd);
      }
    }
    attn = Tensor<T>::from_data({n, c}, std::move(out));
  } else {
    const bool capture = ctx.options->capture_block == index;
    attn = causal_attention(q, k, v, heads, capture ? &ctx.result->attention : nullptr);
    if (capture) {
      ctx.result->attention_positions.assign(positions.begin(), positions.end());
    }
  }
  auto x1 = add(x, matmul(attn, b.wo));
  auto h2 = rms_norm(x1, b.ffn_norm);
  auto gated = mul(silu(matmul(h2, b.w_gate)), matmul(h2, b.w_up));
  return add(x1, matmul(gated, b.w_down));
}

template <typename T>
Tensor<T> Model<T>::run_level(int level, Tensor<T> x, std::vector<std::int64_t> positions,
                              Context& ctx) const {
  const int k = layout_.num_levels();
  for (int i = 0; i < layout_.down_blocks()[level]; ++i) {
    x = run_block(down_offset_[level] + i, x, positions, ctx);
  }
  if (level == k) return x;

  const auto& lp = levels_[level];
  const auto& opts = *ctx.options;
  auto s = score_tokens(x, lp.score_weight, lp.score_bias);
  Tensor<T> w;
  Selection sel;
  UpsampleScaling<T> scaling;
  if (opts.mode == ForwardMode::kTrain) {
    w = balanced_clamp01(s, lp.balancer);
    sel = select_topk<T>(std::as_const(w).data(), lp.retention);
    scaling = compute_scaling(w, sel, *opts.rng);
  } else {
    w = clamp01(s);
    sel = opts.mode == ForwardMode::kEval
              ? select_topk<T>(std::as_const(w).data(), lp.retention)
              : select_by_threshold<T>(std::as_const(s).data(), static_cast<T>(opts.threshold));
    scaling = inference_scaling(w, sel);
  }

  SubsampleRecord rec;
  rec.level = level + 1;
  rec.retention = lp.retention;
  const auto sd = std::as_const(s).data();
  const auto wd = std::as_const(w).data();
  rec.scores.assign(sd.begin(), sd.end());
  rec.weights.assign(wd.begin(), wd.end());
  rec.kept = sel.kept;
  rec.discarded = sel.discarded;
  std::vector<std::int64_t> inner_positions;
  inner_positions.reserve(sel.kept.size());
  for (auto i : sel.kept) inner_positions.push_back(positions[i]);
  rec.kept_positions = inner_positions;
  ctx.result->records.push_back(std::move(rec));

  Tensor<T> y = x;
  if (!sel.kept.empty()) {
    auto inner = run_level(level + 1, index_select(x, 0, sel.kept), std::move(inner_positions), ctx);
    y = upsample(x, inner, scaling.w_scaling, sel.kept);
  }
  x = bypass_combine(x, y, lp.bypass);
  for (int i = 0; i < layout_.up_blocks()[level]; ++i) {
    x = run_block(up_offset_[level] + i, x, positions, ctx);
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::head(const Tensor<T>& x) const {
  return matmul(rms_norm(x, final_norm_), lm_head_);
}

template <typename T>
ForwardResult<T> Model<T>::forward(std::span<const int> ids, const ForwardOptions& options) const {
  if (ids.empty()) throw EmptySequenceError("forward on an empty token sequence");
  if (static_cast<std::int64_t>(ids.size()) > cfg_.context_window) {
    throw WindowError("sequence of " + std::to_string(ids.size()) +
                      " tokens exceeds the context window of " +
                      std::to_string(cfg_.context_window));
  }
  if (options.mode == ForwardMode::kTrain && options.rng == nullptr && num_levels() > 0) {
    throw ConfigError("training-mode forward needs a random generator");
  }
  ForwardResult<T> result;
  Context ctx{&options, nullptr, &result};
  std::vector<std::int64_t> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  auto x = embedding(ids, embed_);
  x = run_level(0, x, std::move(positions), ctx);
  result.logits = head(x);
  return result;
}

template <typename T>
ForwardResult<T> Model<T>::forward_cached(std::span<const int> ids, std::int64_t start,
                                          double threshold,
                                          std::vector<BlockCache<T>>& caches) const {
  if (ids.empty()) throw EmptySequenceError("forward on an empty token sequence");
  if (caches.size() != blocks_.size()) {
    throw DimensionError("expected one cache per block");
  }
  const auto n = static_cast<std::int64_t>(ids.size());
  if (start < 0 || start + n > cfg_.context_window) {
    throw WindowError("positions " + std::to_string(start) + ".." + std::to_string(start + n - 1) +
                      " exceed the context window of " + std::to_string(cfg_.context_window));
  }
  NoGradGuard guard;
  ForwardOptions options;
  options.mode = ForwardMode::kThreshold;
  options.threshold = threshold;
  ForwardResult<T> result;
  Context ctx{&options, &caches, &result};
  std::vector<std::int64_t> positions(ids.size());
  std::iota(positions.begin(), positions.end(), start);
  auto x = embedding(ids, embed_);
  x = run_level(0, x, std::move(positions), ctx);
  result.logits = head(x);
  return result;
}

template <typename T, typename U>
void copy_parameters(const Model<U>& src, Model<T>& dst) {
  auto from = src.named_parameters();
  auto to = dst.named_parameters();
  if (from.size() != to.size()) throw DimensionError("parameter tables differ in length");
  for (size_t i = 0; i < from.size(); ++i) {
    if (from[i].first != to[i].first || from[i].second.shape() != to[i].second.shape()) {
      throw DimensionError("parameter " + from[i].first + " does not match " + to[i].first);
    }
    auto s = std::as_const(from[i].second).data();
    auto d = to[i].second.data();
    for (size_t j = 0; j < s.size(); ++j) d[j] = static_cast<T>(s[j]);
  }
}

template struct BlockCache<float>;
template struct BlockCache<double>;
template class Model<float>;
template class Model<double>;
template void copy_parameters(const Model<float>&, Model<float>&);
template void copy_parameters(const Model<float>&, Model<double>&);
template void copy_parameters(const Model<double>&, Model<float>&);
template void copy_parameters(const Model<double>&, Model<double>&);

}  // namespace subllm
