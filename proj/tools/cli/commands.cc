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

#include "commands.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "subllm/checkpoint.h"
#include "subllm/config.h"
#include "subllm/corpus.h"
#include "subllm/errors.h"
#include "subllm/flops.h"
#include "subllm/inference.h"
#include "subllm/structure.h"
#include "subllm/trainer.h"

namespace subllm::cli {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<double> reach_fractions(const ModelConfig& cfg) {
  std::vector<double> reach = {1.0};
  for (double d : cfg.retention) reach.push_back(reach.back() * d);
  return reach;
}

// Seconds for one training-mode forward+backward over `ids`.
double time_train_step(const Model<float>& model, const std::vector<int>& ids, Rng& rng) {
  for (auto p : model.parameters()) p.zero_grad();
  const auto t0 = std::chrono::steady_clock::now();
  ForwardOptions opts;
  opts.mode = ForwardMode::kTrain;
  opts.rng = &rng;
  const std::span<const int> all(ids);
  auto fwd = model.forward(all.first(all.size() - 1), opts);
  cross_entropy(fwd.logits, all.subspan(1)).backward();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::int64_t activation_elements(const ModelConfig& cfg, std::int64_t window) {
  const auto reach = reach_fractions(cfg);
  const double c = cfg.width, f = cfg.ffn_width, h = cfg.num_heads;
  double total = 2.0 * static_cast<double>(window) * cfg.vocab_size;
  for (int level : cfg.layout().block_levels()) {
    const double m = std::ceil(static_cast<double>(window) * reach[level]);
    total += m * (10.0 * c + 3.0 * f) + h * m * (m + 1.0) / 2.0;
  }
  return static_cast<std::int64_t>(total);
}

std::int64_t cache_elements(const ModelConfig& cfg, std::int64_t window) {
  const auto reach = reach_fractions(cfg);
  double total = 0.0;
  for (int level : cfg.layout().block_levels()) {
    total += 2.0 * cfg.width * std::ceil(static_cast<double>(window) * reach[level]);
  }
  return static_cast<std::int64_t>(total);
}

std::string bench_header() {
  return "window,model,structure,train_tokens_per_s,decode_tokens_per_s,param_elements,"
         "activation_elements,cache_elements,memory_bytes,flops_per_token,flops_ratio,"
         "measured_ratio";
}

std::string bench_line(const BenchRow& r) {
  return std::to_string(r.window) + "," + r.model + "," + r.structure + "," +
         fmt(r.train_tokens_per_s) + "," + fmt(r.decode_tokens_per_s) + "," +
         std::to_string(r.param_elements) + "," + std::to_string(r.activation_elements) + "," +
         std::to_string(r.cache_elements) + "," + fmt(r.memory_bytes) + "," +
         fmt(r.flops_per_token) + "," + fmt(r.flops_ratio) + "," + fmt(r.measured_ratio);
}

std::vector<BenchRow> run_bench(const BenchOptions& options) {
  if (options.windows.empty()) throw ConfigError("bench needs at least one window");
  if (options.reps < 1) throw ConfigError("bench needs at least one repetition");
  std::vector<BenchRow> rows;
  for (int window : options.windows) {
    if (window < 2) throw ConfigError("bench windows must be at least 2");
    ModelConfig sub_cfg = options.model;
    sub_cfg.context_window = std::max(sub_cfg.context_window, window + 1);
    ModelConfig base_cfg = sub_cfg.baseline();
    const Model<float> base(base_cfg, RngState{options.seed, 0});
    const Model<float> sub(sub_cfg, RngState{options.seed, 0});

    Rng data(options.seed + static_cast<std::uint64_t>(window));
    std::vector<int> ids(static_cast<size_t>(window) + 1);
    for (auto& id : ids) id = static_cast<int>(data.index(static_cast<std::uint64_t>(sub_cfg.vocab_size)));

    Rng rng(options.seed);
    time_train_step(base, ids, rng);  // warm-up
    time_train_step(sub, ids, rng);
    std::vector<double> tb, ts, paired;
    for (int r = 0; r < options.reps; ++r) {
      tb.push_back(time_train_step(base, ids, rng));
      ts.push_back(time_train_step(sub, ids, rng));
      paired.push_back(tb.back() / ts.back());
    }
    const double base_tps = window / median(tb);
    const double sub_tps = window / median(ts);
    const double speedup = median(paired);

    double base_dec = 0.0, sub_dec = 0.0;
    if (options.decode && options.decode_tokens > 1) {
      GenRequest req;
      req.prompt.assign(ids.begin(), ids.begin() + std::max(1, window / 2));
      req.max_new_tokens = std::min(options.decode_tokens, window - static_cast<int>(req.prompt.size()));
      req.threshold = options.threshold;
      req.max_new_tokens = std::max(req.max_new_tokens, 2);
      base_dec = generate_timed(base, req, 3, "baseline").timing.tokens_per_s;
      sub_dec = generate_timed(sub, req, 3, "subllm").timing.tokens_per_s;
    }

    const auto flops = flops_per_token(sub_cfg, sub_cfg.retention, window);
    auto make = [&](const std::string& name, const Model<float>& m, const ModelConfig& cfg,
                    double train_tps, double dec_tps, double flops_pt) {
      BenchRow row;
      row.window = window;
      row.model = name;
      row.structure = cfg.structure;
      row.train_tokens_per_s = train_tps;
      row.decode_tokens_per_s = dec_tps;
      row.param_elements = m.parameter_count();
      row.activation_elements = activation_elements(cfg, window);
      row.cache_elements = cache_elements(cfg, window);
      row.memory_bytes = 4.0 * static_cast<double>(row.param_elements + row.activation_elements +
                                                   row.cache_elements);
      row.flops_per_token = flops_pt;
      row.flops_ratio = flops.ratio;
      row.measured_ratio = speedup;
      return row;
    };
    rows.push_back(make("baseline", base, base_cfg, base_tps, base_dec, flops.baseline));
    rows.push_back(make("subllm", sub, sub_cfg, sub_tps, sub_dec, flops.subllm));
  }
  return rows;
}

AttentionDump dump_attention(const Model<float>& model, const std::vector<int>& prompt, int block,
                             double threshold) {
  if (block < 0 || block >= model.num_blocks()) {
    throw IndexError("block index " + std::to_string(block) + " is outside [0, " +
                     std::to_string(model.num_blocks()) + ")");
  }
  NoGradGuard guard;
  ForwardOptions opts;
  opts.mode = ForwardMode::kThreshold;
  opts.threshold = threshold;
  opts.capture_block = block;
  auto fwd = model.forward(prompt, opts);

  AttentionDump d;
  d.block = block;
  d.block_level = model.block_levels()[block];
  d.levels = model.num_levels();
  d.prompt_length = static_cast<std::int64_t>(prompt.size());
  d.positions = fwd.attention_positions;
  d.kept.assign(static_cast<size_t>(d.levels), std::vector<bool>(prompt.size(), false));
  for (const auto& r : fwd.records) {
    for (auto p : r.kept_positions) d.kept[r.level - 1][static_cast<size_t>(p)] = true;
  }
  const auto n = static_cast<std::int64_t>(d.positions.size());
  d.matrix.assign(static_cast<size_t>(n * n), 0.0);
  if (n > 0) {
    const auto heads = static_cast<std::int64_t>(fwd.attention.size()) / (n * n);
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < n * n; ++i) d.matrix[i] += fwd.attention[h * n * n + i];
    }
    for (auto& v : d.matrix) v /= static_cast<double>(heads);
  }
  if (d.block_level < d.levels && n > 0) {
    std::vector<double> mass(static_cast<size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < n; ++j) mass[j] += d.matrix[i * n + j];
    }
    std::vector<std::int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::int64_t a, std::int64_t b) { return mass[a] > mass[b]; });
    const auto top = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(0.4 * n)));
    std::int64_t hits = 0;
    for (std::int64_t t = 0; t < top; ++t) {
      hits += d.kept[d.block_level][static_cast<size_t>(d.positions[order[t]])] ? 1 : 0;
    }
    d.overlap = static_cast<double>(hits) / static_cast<double>(top);
  }
  return d;
}

void write_attention_csv(std::ostream& out, const AttentionDump& d) {
  out << "pos";
  for (int l = 1; l <= d.levels; ++l) out << ",kept_l" << l;
  for (auto p : d.positions) out << ",attn_" << p;
  out << '\n';
  const auto n = static_cast<std::int64_t>(d.positions.size());
  std::vector<std::int64_t> row_of(static_cast<size_t>(d.prompt_length), -1);
  for (std::int64_t i = 0; i < n; ++i) row_of[d.positions[i]] = i;
  for (std::int64_t p = 0; p < d.prompt_length; ++p) {
    out << p;
    for (int l = 0; l < d.levels; ++l) out << ',' << (d.kept[l][p] ? 1 : 0);
    const auto i = row_of[p];
    for (std::int64_t j = 0; j < n; ++j) {
      out << ',';
      if (i >= 0) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", d.matrix[i * n + j]);
        out << buf;
      }
    }
    out << '\n';
  }
}

namespace {

int report(const std::exception& e, std::ostream& err, int code) {
  err << "error: " << e.what() << '\n';
  return code;
}

std::vector<int> text_ids(const std::string& text) { return bytes_to_ids(text); }

// Replaces the structure; when the level count changes, every level gets
// the same ratio with a total minimum retention of 0.4.
void apply_structure(ModelConfig& cfg, const std::string& structure) {
  if (structure.empty()) return;
  const auto layout = parse_structure(structure);
  cfg.structure = structure;
  cfg.total_blocks = layout.total_blocks();
  const int k = layout.num_levels();
  if (static_cast<int>(cfg.retention.size()) != k) {
    cfg.retention.assign(static_cast<size_t>(k), k > 0 ? std::pow(0.4, 1.0 / k) : 1.0);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subsampled decoder-only language models: train, generate, benchmark, inspect."};
  app.require_subcommand(1);
  app.allow_extras(false);

  // train
  auto* train = app.add_subcommand("train", "Train a model from a key = value config file");
  std::string train_config, train_structure, train_out;
  std::uint64_t train_seed = 0;
  train->add_option("--config", train_config, "Config file")->required();
  train->add_option("--structure", train_structure, "Override the structure string");
  train->add_option("--seed", train_seed, "Override the seed");
  train->add_option("--out", train_out, "Override the metrics CSV path");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate text from a checkpoint");
  std::string gen_ckpt, gen_prompt, gen_out;
  int gen_tokens = 64;
  double gen_threshold = 0.0, gen_temperature = 0.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--checkpoint", gen_ckpt, "Checkpoint file")->required();
  gen->add_option("--prompt", gen_prompt, "Prompt text")->required();
  gen->add_option("--max-new-tokens", gen_tokens, "Tokens to generate");
  gen->add_option("--threshold", gen_threshold, "Keep threshold v on the scores");
  gen->add_option("--temperature", gen_temperature, "Sampling temperature (0 = greedy)");
  gen->add_option("--seed", gen_seed, "Sampling seed");
  gen->add_option("--out", gen_out, "Append the timing row to this CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "Paired baseline vs SUBLLM throughput benchmark");
  std::string bench_config, bench_structure, bench_out;
  std::vector<int> bench_windows;
  int bench_reps = 5;
  double bench_threshold = 0.0;
  std::uint64_t bench_seed = 1;
  bool bench_no_decode = false;
  bench->add_option("--config", bench_config, "Config file with the model shape");
  bench->add_option("--structure", bench_structure, "Override the structure string");
  bench->add_option("--window", bench_windows, "Context windows")->delimiter(',');
  bench->add_option("--reps", bench_reps, "Timed repetitions per model and window");
  bench->add_option("--threshold", bench_threshold, "Keep threshold for decode timing");
  bench->add_option("--seed", bench_seed, "Initialization seed");
  bench->add_option("--out", bench_out, "Write the report CSV here");
  bench->add_flag("--no-decode", bench_no_decode, "Skip decode timing");

  // flops
  auto* flops = app.add_subcommand("flops", "Analytic per-token training FLOPs");
  std::string flops_config, flops_structure;
  std::vector<int> flops_windows;
  std::vector<double> flops_retention;
  int flops_width = 0, flops_heads = 0, flops_ffn = 0;
  flops->add_option("--config", flops_config, "Config file with the model shape");
  flops->add_option("--structure", flops_structure, "Structure string");
  flops->add_option("--width", flops_width, "Model width");
  flops->add_option("--heads", flops_heads, "Attention heads");
  flops->add_option("--ffn", flops_ffn, "Feed-forward width");
  flops->add_option("--window", flops_windows, "Context windows")->delimiter(',');
  flops->add_option("--retention", flops_retention, "Per-level retention ratios")->delimiter(',');

  // parse
  auto* parse = app.add_subcommand("parse", "Validate and describe a structure string");
  std::string parse_text;
  parse->add_option("structure", parse_text, "Structure string")->required();

  // dump-attention
  auto* dump = app.add_subcommand("dump-attention", "Attention matrix and kept-index bitmaps");
  std::string dump_ckpt, dump_prompt, dump_out;
  int dump_block = 0;
  double dump_threshold = 0.0;
  dump->add_option("--checkpoint", dump_ckpt, "Checkpoint file")->required();
  dump->add_option("--prompt", dump_prompt, "Prompt text")->required();
  dump->add_option("--block", dump_block, "Block index")->required();
  dump->add_option("--threshold", dump_threshold, "Keep threshold v on the scores");
  dump->add_option("--out", dump_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      auto cfg = load_run_config(train_config);
      apply_structure(cfg.model, train_structure);
      if (train->count("--seed")) cfg.train.seed = train_seed;
      if (!train_out.empty()) cfg.train.metrics_path = train_out;
      cfg.model.validate();
      cfg.train.validate(cfg.model);
      auto corpus = load_corpus(cfg.train.corpus_path);
      Trainer trainer(cfg.model, cfg.train, std::move(corpus));
      out << metrics_header(trainer.model().num_levels()) << '\n';
      trainer.run([&](const MetricsRow& row) { out << metrics_line(row) << std::endl; });
      return kExitOk;
    }
    if (*gen) {
      const auto model = load_checkpoint<float>(gen_ckpt);
      GenRequest req;
      req.prompt = text_ids(gen_prompt);
      req.max_new_tokens = gen_tokens;
      req.threshold = gen_threshold;
      req.greedy = gen_temperature <= 0.0;
      req.temperature = gen_temperature > 0.0 ? gen_temperature : 1.0;
      req.seed = gen_seed;
      const auto res = generate_timed(model, req, 5, "subllm");
      std::string text(res.tokens.begin(), res.tokens.end());
      out << text << '\n';
      if (!gen_out.empty()) {
        std::ofstream f(gen_out, std::ios::trunc);
        f << TimingReport::csv_header() << '\n' << res.timing.csv_row() << '\n';
      } else {
        err << TimingReport::csv_header() << '\n' << res.timing.csv_row() << '\n';
      }
      return kExitOk;
    }
    if (*bench) {
      BenchOptions opts;
      if (!bench_config.empty()) opts.model = load_run_config(bench_config).model;
      apply_structure(opts.model, bench_structure);
      if (opts.model.scorer_init_std == 0.0) opts.model.scorer_init_std = 0.02;
      if (!bench_windows.empty()) opts.windows = bench_windows;
      opts.reps = bench_reps;
      opts.threshold = bench_threshold;
      opts.seed = bench_seed;
      opts.decode = !bench_no_decode;
      opts.model.validate();
      const auto rows = run_bench(opts);
      std::ofstream file;
      if (!bench_out.empty()) {
        file.open(bench_out, std::ios::trunc);
        if (!file) throw ConfigError("cannot write '" + bench_out + "'");
        file << bench_header() << '\n';
      }
      out << bench_header() << '\n';
      for (const auto& r : rows) {
        out << bench_line(r) << '\n';
        if (file.is_open()) file << bench_line(r) << '\n';
      }
      return kExitOk;
    }
    if (*flops) {
      ModelConfig cfg;
      if (!flops_config.empty()) cfg = load_run_config(flops_config).model;
      apply_structure(cfg, flops_structure);
      if (flops_width > 0) cfg.width = flops_width;
      if (flops_heads > 0) cfg.num_heads = flops_heads;
      if (flops_ffn > 0) cfg.ffn_width = flops_ffn;
      if (!flops_retention.empty()) cfg.retention = flops_retention;
      if (flops_windows.empty()) flops_windows = {cfg.context_window};
      cfg.context_window = std::max(cfg.context_window,
                                    *std::max_element(flops_windows.begin(), flops_windows.end()));
      cfg.validate();
      out << "window,subllm_flops_per_token,baseline_flops_per_token,ratio,block_fraction\n";
      for (int w : flops_windows) {
        const auto f = flops_per_token(cfg, cfg.retention, w);
        out << w << ',' << fmt(f.subllm) << ',' << fmt(f.baseline) << ',' << fmt(f.ratio) << ','
            << fmt(f.block_fraction) << '\n';
      }
      return kExitOk;
    }
    if (*parse) {
      out << describe_structure(parse_structure(parse_text));
      return kExitOk;
    }
    if (*dump) {
      const auto model = load_checkpoint<float>(dump_ckpt);
      const auto d = dump_attention(model, text_ids(dump_prompt), dump_block, dump_threshold);
      std::ofstream f(dump_out, std::ios::trunc);
      if (!f) throw ConfigError("cannot write '" + dump_out + "'");
      write_attention_csv(f, d);
      out << "block " << d.block << " level " << d.block_level << " rows " << d.positions.size();
      if (d.overlap >= 0.0) out << " overlap " << fmt(d.overlap);
      out << '\n';
      return kExitOk;
    }
  } catch (const DataError& e) {
    return report(e, err, kExitUsage);
  } catch (const ConfigError& e) {
    return report(e, err, kExitUsage);
  } catch (const ParseError& e) {
    return report(e, err, kExitUsage);
  } catch (const StructureError& e) {
    return report(e, err, kExitUsage);
  } catch (const CapacityError& e) {
    return report(e, err, kExitUsage);
  } catch (const IndexError& e) {
    return report(e, err, kExitUsage);
  } catch (const InputError& e) {
    return report(e, err, kExitUsage);
  } catch (const WindowError& e) {
    return report(e, err, kExitUsage);
  } catch (const std::exception& e) {
    return report(e, err, kExitRuntime);
  }
  return kExitUsage;
}

}  // namespace subllm::cli
