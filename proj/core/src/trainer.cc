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

#include "subllm/trainer.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "subllm/checkpoint.h"
#include "subllm/errors.h"

namespace subllm {

void TrainConfig::validate(const ModelConfig& model) const {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (sequence_length <= 0) throw ConfigError("sequence_length must be positive");
  if (sequence_length > model.context_window) {
    throw ConfigError("sequence_length " + std::to_string(sequence_length) +
                      " exceeds context_window " + std::to_string(model.context_window));
  }
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw ConfigError("warmup_steps must lie in [0, total_steps)");
  }
  if (!(peak_lr >= 0.0)) throw ConfigError("peak_lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (eval_interval <= 0) throw ConfigError("eval_interval must be positive");
  if (eval_windows <= 0) throw ConfigError("eval_windows must be positive");
  if (bypass_warm_steps < 0) throw ConfigError("bypass_warm_steps must be non-negative");
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  if (step <= 0) return 0.0;
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (step >= cfg.total_steps) return 0.1 * cfg.peak_lr;
  const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  const double t = static_cast<double>(step - cfg.warmup_steps) / span;
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  return cfg.peak_lr * (0.1 + 0.9 * cosine);
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct LevelAccum {
  std::int64_t kept = 0;
  std::int64_t incoming = 0;
  std::int64_t positive = 0;
  double abs_sum = 0.0;
};

void accumulate(std::vector<LevelAccum>& acc, const std::vector<SubsampleRecord>& records) {
  for (const auto& r : records) {
    auto& a = acc[r.level - 1];
    a.kept += static_cast<std::int64_t>(r.kept.size());
    a.incoming += static_cast<std::int64_t>(r.scores.size());
    for (double s : r.scores) {
      if (s > 0.0) ++a.positive;
      a.abs_sum += std::abs(s);
    }
  }
}

std::string timing_path(const std::string& metrics_path) {
  const std::string ext = ".csv";
  if (metrics_path.size() > ext.size() &&
      metrics_path.compare(metrics_path.size() - ext.size(), ext.size(), ext) == 0) {
    return metrics_path.substr(0, metrics_path.size() - ext.size()) + ".timing.csv";
  }
  return metrics_path + ".timing.csv";
}

}  // namespace

std::string metrics_header(int levels) {
  std::string h = "step,train_loss,valid_loss,lr";
  for (int l = 1; l <= levels; ++l) {
    const auto s = std::to_string(l);
    h += ",retention_l" + s + ",p_l" + s + ",mean_abs_s_l" + s + ",mean_c_l" + s +
         ",thr_keep_l" + s + ",thr_reach_l" + s;
  }
  return h;
}

std::string metrics_line(const MetricsRow& row) {
  std::string line = std::to_string(row.step) + "," + fmt_double(row.train_loss) + "," +
                     fmt_double(row.valid_loss) + "," + fmt_double(row.lr);
  for (const auto& l : row.levels) {
    line += "," + fmt_double(l.retention) + "," + fmt_double(l.positive_fraction) + "," +
            fmt_double(l.mean_abs_score) + "," + fmt_double(l.mean_c) + "," +
            fmt_double(l.threshold_keep) + "," + fmt_double(l.threshold_reach);
  }
  return line;
}

Adam::Adam(std::vector<Tensor<float>> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float c1 = static_cast<float>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const float c2 = static_cast<float>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const float e = static_cast<float>(eps_);
  const float rate = static_cast<float>(lr);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto data = p.data();
    const auto g = std::as_const(p).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < data.size(); ++j) {
      const float gj = g.empty() ? 0.0f : g[j];
      m[j] = b1 * m[j] + (1.0f - b1) * gj;
      v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
      const float mh = m[j] / c1;
      const float vh = v[j] / c2;
      data[j] -= rate * mh / (std::sqrt(vh) + e);
    }
  }
}

Trainer::Trainer(const ModelConfig& model_cfg, const TrainConfig& train_cfg, TokenStream corpus)
    : model_cfg_(model_cfg),
      cfg_(train_cfg),
      corpus_(std::move(corpus)),
      model_(model_cfg, RngState{train_cfg.seed, 0}),
      adam_(model_.parameters(), train_cfg.beta1, train_cfg.beta2, train_cfg.eps),
      data_rng_(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL),
      sample_rng_(train_cfg.seed ^ 0xc2b2ae3d27d4eb4fULL) {
  cfg_.validate(model_cfg_);
  if (static_cast<std::int64_t>(corpus_.train.size()) < cfg_.sequence_length + 1) {
    throw DataError("data error: training split has " + std::to_string(corpus_.train.size()) +
                    " tokens, need at least sequence_length + 1 = " +
                    std::to_string(cfg_.sequence_length + 1));
  }
}

std::vector<std::vector<int>> Trainer::sample_batch() {
  const auto len = static_cast<std::uint64_t>(cfg_.sequence_length) + 1;
  const auto starts = corpus_.train.size() - len + 1;
  std::vector<std::vector<int>> batch;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const auto s = data_rng_.index(starts);
    batch.emplace_back(corpus_.train.begin() + static_cast<std::ptrdiff_t>(s),
                       corpus_.train.begin() + static_cast<std::ptrdiff_t>(s + len));
  }
  return batch;
}

StepResult Trainer::train_step() {
  const BypassSchedule schedule{0.9, 0.2, 1.0, cfg_.bypass_warm_steps};
  for (auto& lp : model_.levels()) bypass_schedule_step(lp.bypass, step_, schedule);
  const auto params = model_.parameters();
  for (auto p : params) p.zero_grad();

  StepResult result;
  const auto batch = sample_batch();
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  ForwardOptions opts;
  opts.mode = ForwardMode::kTrain;
  opts.rng = &sample_rng_;
  for (const auto& seq : batch) {
    const std::span<const int> all(seq);
    auto fwd = model_.forward(all.first(all.size() - 1), opts);
    auto loss = cross_entropy(fwd.logits, all.subspan(1));
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw DivergenceError("non-finite training loss at step " + std::to_string(step_));
    }
    result.loss += value / static_cast<double>(batch.size());
    scale(loss, inv_b).backward();
    for (auto& r : fwd.records) result.records.push_back(std::move(r));
  }

  double sq = 0.0;
  for (const auto& p : params) {
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  result.grad_norm = std::sqrt(sq);
  if (!std::isfinite(result.grad_norm)) {
    throw DivergenceError("non-finite gradient norm at step " + std::to_string(step_));
  }
  if (cfg_.grad_clip > 0.0 && result.grad_norm > cfg_.grad_clip) {
    const float f = static_cast<float>(cfg_.grad_clip / result.grad_norm);
    for (auto p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= f;
    }
  }
  ++step_;
  adam_.step(lr_at(step_, cfg_));
  return result;
}

std::vector<std::span<const int>> Trainer::windows(std::span<const int> stream) const {
  std::vector<std::span<const int>> out;
  if (stream.size() < 2) return out;
  const auto len = std::min<size_t>(static_cast<size_t>(cfg_.sequence_length), stream.size() - 1);
  for (size_t start = 0; start + len + 1 <= stream.size() &&
                         out.size() < static_cast<size_t>(cfg_.eval_windows);
       start += len) {
    out.push_back(stream.subspan(start, len + 1));
  }
  return out;
}

double Trainer::evaluate() const { return evaluate(corpus_.valid); }

double Trainer::evaluate(std::span<const int> stream) const {
  const auto wins = windows(stream);
  if (wins.empty()) throw DataError("data error: stream too short to evaluate");
  NoGradGuard guard;
  ForwardOptions opts;
  opts.mode = ForwardMode::kEval;
  double total = 0.0;
  for (auto w : wins) {
    auto fwd = model_.forward(w.first(w.size() - 1), opts);
    total += cross_entropy(fwd.logits, w.subspan(1)).item();
  }
  return total / static_cast<double>(wins.size());
}

ThresholdStats Trainer::threshold_stats() const {
  const int k = model_.num_levels();
  ThresholdStats st;
  st.keep.assign(k, 0.0);
  st.reach.assign(k, 0.0);
  if (k == 0) return st;
  const auto wins = windows(corpus_.valid);
  NoGradGuard guard;
  ForwardOptions opts;
  opts.mode = ForwardMode::kThreshold;
  std::vector<LevelAccum> acc(k);
  std::int64_t tokens = 0;
  for (auto w : wins) {
    auto fwd = model_.forward(w.first(w.size() - 1), opts);
    tokens += static_cast<std::int64_t>(w.size() - 1);
    accumulate(acc, fwd.records);
  }
  for (int l = 0; l < k; ++l) {
    st.keep[l] = acc[l].incoming ? static_cast<double>(acc[l].kept) / acc[l].incoming : 0.0;
    st.reach[l] = tokens ? static_cast<double>(acc[l].kept) / tokens : 0.0;
  }
  return st;
}

void Trainer::save(const std::string& path) const {
  save_checkpoint(path, model_, data_rng_.state(), step_);
}

std::vector<MetricsRow> Trainer::run(const std::function<void(const MetricsRow&)>& on_row) {
  const int k = model_.num_levels();
  std::ofstream metrics, timing;
  if (!cfg_.metrics_path.empty()) {
    metrics.open(cfg_.metrics_path, std::ios::trunc);
    timing.open(timing_path(cfg_.metrics_path), std::ios::trunc);
    if (!metrics || !timing) {
      throw ConfigError("cannot write metrics file '" + cfg_.metrics_path + "'");
    }
    metrics << metrics_header(k) << '\n';
    timing << "step,tokens_per_s\n";
  }

  std::vector<MetricsRow> rows;
  std::vector<LevelAccum> acc(k);
  double loss_sum = 0.0;
  std::int64_t loss_count = 0;
  std::int64_t tokens = 0;
  auto clock_start = std::chrono::steady_clock::now();

  auto emit = [&](double train_loss) {
    MetricsRow row;
    row.step = step_;
    row.train_loss = train_loss;
    row.valid_loss = evaluate();
    row.lr = lr_at(step_, cfg_);
    const auto thr = threshold_stats();
    for (int l = 0; l < k; ++l) {
      LevelStats ls;
      const auto& a = acc[l];
      if (a.incoming > 0) {
        ls.retention = static_cast<double>(a.kept) / a.incoming;
        ls.positive_fraction = static_cast<double>(a.positive) / a.incoming;
        ls.mean_abs_score = a.abs_sum / a.incoming;
      }
      double c_sum = 0.0;
      const auto c = std::as_const(model_.levels()[l].bypass.c).data();
      for (float v : c) c_sum += v;
      ls.mean_c = c.empty() ? 0.0 : c_sum / static_cast<double>(c.size());
      ls.threshold_keep = thr.keep[l];
      ls.threshold_reach = thr.reach[l];
      row.levels.push_back(ls);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    row.tokens_per_s = secs > 0.0 ? static_cast<double>(tokens) / secs : 0.0;
    if (metrics.is_open()) {
      metrics << metrics_line(row) << '\n';
      metrics.flush();
      timing << row.step << ',' << fmt_double(row.tokens_per_s) << '\n';
      timing.flush();
    }
    if (!cfg_.checkpoint_path.empty()) save(cfg_.checkpoint_path);
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
    acc.assign(k, LevelAccum{});
    loss_sum = 0.0;
    loss_count = 0;
    tokens = 0;
    clock_start = std::chrono::steady_clock::now();
  };

  if (step_ == 0) emit(evaluate(corpus_.train));
  while (step_ < cfg_.total_steps) {
    auto r = train_step();
    loss_sum += r.loss;
    ++loss_count;
    tokens += static_cast<std::int64_t>(cfg_.batch_size) * cfg_.sequence_length;
    accumulate(acc, r.records);
    if (step_ % cfg_.eval_interval == 0 || step_ == cfg_.total_steps) {
      emit(loss_sum / static_cast<double>(loss_count));
    }
  }
  return rows;
}

}  // namespace subllm
