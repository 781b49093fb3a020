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

#include "subllm/subsample.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "subllm/errors.h"

namespace subllm {

BalancerConfig BalancerConfig::for_retention(double d) {
  BalancerConfig cfg;
  cfg.p_max = std::min(1.0, d + 0.05);
  cfg.p_min = std::max(0.0, d - 0.05);
  return cfg;
}

void BalancerConfig::validate() const {
  if (!(0.0 <= p_min && p_min < p_max && p_max <= 1.0)) {
    throw ConfigError("balancer needs 0 <= p_min < p_max <= 1");
  }
  if (!(0.0 < a_min && a_min < a_max)) throw ConfigError("balancer needs 0 < a_min < a_max");
  if (lambda < 0.0) throw ConfigError("balancer lambda must be non-negative");
}

double BypassSchedule::c_min_at(std::int64_t step) const {
  if (step <= 0 || warm_steps <= 0) return step >= warm_steps ? c_min_end : c_min_start;
  if (step >= warm_steps) return c_min_end;
  const double t = static_cast<double>(step) / static_cast<double>(warm_steps);
  return c_min_start + (c_min_end - c_min_start) * t;
}

std::int64_t retained_count(std::int64_t n, double d) {
  if (n <= 0) return 0;
  const auto k = static_cast<std::int64_t>(std::ceil(static_cast<double>(n) * d - 1e-9));
  return std::clamp<std::int64_t>(k, 1, n);
}

template <typename T>
BalancerStats balancer_stats(std::span<const T> scores) {
  BalancerStats st;
  if (scores.empty()) return st;
  std::int64_t pos = 0;
  double abs_sum = 0.0;
  for (auto s : scores) {
    if (s > T(0)) ++pos;
    abs_sum += std::abs(static_cast<double>(s));
  }
  st.positive_fraction = static_cast<double>(pos) / static_cast<double>(scores.size());
  st.mean_abs = abs_sum / static_cast<double>(scores.size());
  return st;
}

template <typename T>
Tensor<T> score_tokens(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const auto n = x.dim(0);
  return reshape(add_bias(matmul(x, weight), bias), {n});
}

namespace {

// Adds the balancer penalty for scores `value` to `grad`, with the penalty
// scale taken from `reference` (the gradient magnitude source).
template <typename T>
void add_balancer_penalty(const BalancerConfig& cfg, std::span<const T> value,
                          std::span<const T> reference, std::span<T> grad) {
  if (grad.empty()) return;
  const auto st = balancer_stats(value);
  T mean_abs_grad = 0;
  for (auto g : reference) mean_abs_grad += std::abs(g);
  mean_abs_grad /= static_cast<T>(reference.size());
  const T delta = static_cast<T>(cfg.lambda) * mean_abs_grad;
  T shift = 0;
  if (st.positive_fraction > cfg.p_max) shift += delta;
  if (st.positive_fraction < cfg.p_min) shift -= delta;
  T magnitude = 0;
  if (st.mean_abs > cfg.a_max) magnitude += delta;
  if (st.mean_abs < cfg.a_min) magnitude -= delta;
  for (size_t i = 0; i < grad.size(); ++i) {
    const T sign = value[i] > T(0) ? T(1) : (value[i] < T(0) ? T(-1) : T(0));
    grad[i] += shift + magnitude * sign;
  }
}

}  // namespace

template <typename T>
Tensor<T> balance(const Tensor<T>& s, const BalancerConfig& cfg) {
  return custom_grad<T>(s, [cfg](std::span<const T> value, std::span<T> grad) {
    const std::vector<T> reference(grad.begin(), grad.end());
    add_balancer_penalty<T>(cfg, value, reference, grad);
  });
}

template <typename T>
Tensor<T> balanced_clamp01(const Tensor<T>& s, const BalancerConfig& cfg) {
  auto sd = s.data();
  std::vector<T> out(sd.size());
  for (size_t i = 0; i < sd.size(); ++i) out[i] = std::min(std::max(sd[i], T(0)), T(1));
  return Tensor<T>::make_result(s.shape(), std::move(out), {s},
                                [s, cfg](std::span<const T> g) {
                                  auto value = s.data();
                                  std::vector<T> gs(g.size());
                                  for (size_t i = 0; i < g.size(); ++i) {
                                    gs[i] = value[i] >= T(0) && value[i] <= T(1) ? g[i] : T(0);
                                  }
                                  add_balancer_penalty<T>(cfg, value, g, gs);
                                  s.accumulate_grad(gs);
                                });
}

template <typename T>
Selection select_topk(std::span<const T> w, double d) {
  const auto n = static_cast<std::int64_t>(w.size());
  if (n == 0) throw EmptySequenceError("select_topk on an empty sequence");
  if (!(d > 0.0 && d <= 1.0)) throw ConfigError("retention ratio must lie in (0, 1]");
  const auto keep = retained_count(n, d);
  std::vector<std::int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](std::int64_t a, std::int64_t b) {
                      if (w[a] != w[b]) return w[a] > w[b];
                      return a < b;
                    });
  Selection sel;
  sel.kept.assign(order.begin(), order.begin() + keep);
  std::sort(sel.kept.begin(), sel.kept.end());
  sel.discarded.reserve(static_cast<size_t>(n - keep));
  size_t k = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (k < sel.kept.size() && sel.kept[k] == i) {
      ++k;
    } else {
      sel.discarded.push_back(i);
    }
  }
  return sel;
}

template <typename T>
Selection select_by_threshold(std::span<const T> scores, T threshold) {
  Selection sel;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(scores.size()); ++i) {
    (select_threshold(scores[i], threshold) ? sel.kept : sel.discarded).push_back(i);
  }
  return sel;
}

namespace {

template <typename T>
UpsampleScaling<T> make_scaling(const Tensor<T>& w, const Selection& sel,
                                std::vector<std::int64_t> sources) {
  const auto n = w.numel();
  if (static_cast<std::int64_t>(sel.kept.size() + sel.discarded.size()) != n) {
    throw IndexError("selection does not partition the sequence");
  }
  auto wd = w.data();
  UpsampleScaling<T> out;
  out.w_kept.reserve(sel.kept.size());
  for (auto i : sel.kept) out.w_kept.push_back(wd[i]);
  out.w_discarded.reserve(sel.discarded.size());
  for (auto i : sel.discarded) out.w_discarded.push_back(wd[i]);
  const bool sampled = !sources.empty();
  out.w_sample.assign(sel.kept.size(), T(0));
  if (sampled) {
    for (size_t j = 0; j < sel.kept.size(); ++j) out.w_sample[j] = out.w_discarded[sources[j]];
  }
  std::vector<T> scaling(sel.kept.size());
  for (size_t j = 0; j < scaling.size(); ++j) scaling[j] = out.w_kept[j] - out.w_sample[j];

  std::vector<std::int64_t> kept = sel.kept;
  std::vector<std::int64_t> targets;
  if (sampled) {
    targets.reserve(sources.size());
    for (auto src : sources) targets.push_back(sel.discarded[src]);
  }
  out.sample_sources = std::move(sources);
  const auto m = static_cast<std::int64_t>(scaling.size());
  out.w_scaling = Tensor<T>::make_result(
      {m}, std::move(scaling), {w},
      [w, kept = std::move(kept), targets = std::move(targets)](std::span<const T> g) mutable {
        auto gw = w.mutable_grad();
        for (size_t j = 0; j < kept.size(); ++j) {
          gw[kept[j]] += g[j];
          if (!targets.empty()) gw[targets[j]] -= g[j];
        }
      });
  return out;
}

}  // namespace

template <typename T>
UpsampleScaling<T> compute_scaling(const Tensor<T>& w, const Selection& selection, Rng& rng) {
  std::vector<std::int64_t> sources;
  if (!selection.discarded.empty()) {
    sources.reserve(selection.kept.size());
    for (size_t j = 0; j < selection.kept.size(); ++j) {
      sources.push_back(static_cast<std::int64_t>(rng.index(selection.discarded.size())));
    }
  }
  return make_scaling(w, selection, std::move(sources));
}

template <typename T>
UpsampleScaling<T> inference_scaling(const Tensor<T>& w, const Selection& selection) {
  return make_scaling(w, selection, {});
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, const Tensor<T>& inner, const Tensor<T>& w_scaling,
                   std::span<const std::int64_t> kept) {
  if (x.rank() != 2) throw DimensionError("upsample: x must be [N x C]");
  const auto n = x.dim(0), c = x.dim(1);
  const auto m = static_cast<std::int64_t>(kept.size());
  if (inner.rank() != 2 || inner.dim(0) != m || inner.dim(1) != c) {
    throw DimensionError("upsample: inner output " + shape_to_string(inner.shape()) +
                         " does not match " + std::to_string(m) + " kept rows of width " +
                         std::to_string(c));
  }
  if (w_scaling.numel() != m) throw DimensionError("upsample: scaling length mismatch");
  for (auto i : kept) {
    if (i < 0 || i >= n) throw IndexError("upsample: kept index out of range");
  }
  auto xd = x.data();
  auto gd = inner.data();
  auto sd = w_scaling.data();
  std::vector<T> out(xd.begin(), xd.end());
  for (std::int64_t j = 0; j < m; ++j) {
    const T s = sd[j];
    T* row = out.data() + kept[j] * c;
    const T* g = gd.data() + j * c;
    for (std::int64_t k = 0; k < c; ++k) row[k] = s * g[k] + (T(1) - s) * row[k];
  }
  std::vector<std::int64_t> ids(kept.begin(), kept.end());
  return Tensor<T>::make_result(
      {n, c}, std::move(out), {x, inner, w_scaling},
      [x, inner, w_scaling, ids = std::move(ids), c](std::span<const T> g) mutable {
        auto xd = x.data();
        auto gd = inner.data();
        auto sd = w_scaling.data();
        const auto m = static_cast<std::int64_t>(ids.size());
        if (x.requires_grad()) {
          auto gx = x.mutable_grad();
          for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
          for (std::int64_t j = 0; j < m; ++j) {
            const T s = sd[j];
            for (std::int64_t k = 0; k < c; ++k) gx[ids[j] * c + k] -= s * g[ids[j] * c + k];
          }
        }
        if (inner.requires_grad()) {
          auto gi = inner.mutable_grad();
          for (std::int64_t j = 0; j < m; ++j) {
            for (std::int64_t k = 0; k < c; ++k) gi[j * c + k] += sd[j] * g[ids[j] * c + k];
          }
        }
        if (w_scaling.requires_grad()) {
          auto gs = w_scaling.mutable_grad();
          for (std::int64_t j = 0; j < m; ++j) {
            T acc = 0;
            for (std::int64_t k = 0; k < c; ++k) {
              acc += g[ids[j] * c + k] * (gd[j * c + k] - xd[ids[j] * c + k]);
            }
            gs[j] += acc;
          }
        }
      });
}

template <typename T>
Tensor<T> bypass_combine(const Tensor<T>& x, const Tensor<T>& y, const BypassState<T>& state) {
  const T lo = static_cast<T>(state.c_min);
  const T hi = static_cast<T>(state.c_max);
  auto c = custom_grad<T>(state.c, [lo, hi](std::span<const T> value, std::span<T> grad) {
    for (size_t j = 0; j < grad.size(); ++j) {
      if ((value[j] < lo && grad[j] > T(0)) || (value[j] > hi && grad[j] < T(0))) {
        grad[j] = -grad[j];
      }
    }
  });
  return channel_mix(x, y, c);
}

template <typename T>
double bypass_schedule_step(BypassState<T>& state, std::int64_t step,
                            const BypassSchedule& schedule) {
  state.c_min = schedule.c_min_at(step);
  state.c_max = schedule.c_max;
  return state.c_min;
}

#define SUBLLM_INSTANTIATE_SUBSAMPLE(T)                                                     \
  template BalancerStats balancer_stats<T>(std::span<const T>);                             \
  template Tensor<T> score_tokens(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> balance(const Tensor<T>&, const BalancerConfig&);                      \
  template Tensor<T> balanced_clamp01(const Tensor<T>&, const BalancerConfig&);             \
  template Selection select_topk<T>(std::span<const T>, double);                            \
  template Selection select_by_threshold<T>(std::span<const T>, T);                         \
  template UpsampleScaling<T> compute_scaling(const Tensor<T>&, const Selection&, Rng&);    \
  template UpsampleScaling<T> inference_scaling(const Tensor<T>&, const Selection&);        \
  template Tensor<T> upsample(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                              std::span<const std::int64_t>);                               \
  template Tensor<T> bypass_combine(const Tensor<T>&, const Tensor<T>&,                     \
                                    const BypassState<T>&);                                 \
  template double bypass_schedule_step(BypassState<T>&, std::int64_t, const BypassSchedule&);

SUBLLM_INSTANTIATE_SUBSAMPLE(float)
SUBLLM_INSTANTIATE_SUBSAMPLE(double)

#undef SUBLLM_INSTANTIATE_SUBSAMPLE

}  // namespace subllm
