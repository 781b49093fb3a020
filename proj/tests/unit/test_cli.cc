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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.h"
#include "subllm/checkpoint.h"
#include "subllm/corpus.h"
#include "subllm/trainer.h"
#include "synthetic_corpus.h"

namespace subllm::cli {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = SUBLLM_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "subllm_cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::string golden(const std::string& name) { return first_line(read_file(kFixtures / "golden" / name)); }

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "subllm");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// The fixture config plus a corpus path and output paths.
fs::path run_config(const std::string& name, const std::string& corpus) {
  const auto path = scratch(name);
  std::ofstream out(path);
  out << read_file(kFixtures / "tiny_run.cfg") << "corpus_path = " << corpus << '\n';
  return path;
}

fs::path tiny_checkpoint() {
  const auto path = scratch("tiny.ckpt");
  ModelConfig m;
  m.width = 16;
  m.num_heads = 2;
  m.ffn_width = 24;
  m.total_blocks = 5;
  m.structure = "1L_S1_1L_S2_1L_U2_B2_1L_U1_B1_1L";
  m.context_window = 64;
  m.scorer_init_std = 0.5;
  Model<float> model(m, {4, 0});
  save_checkpoint(path.string(), model, RngState{}, 0);
  return path;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"parse", "5L", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"train"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, ParseDescribesStructure) {
  const auto r = cli({"parse", "5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("blocks: 24"), std::string::npos);
  EXPECT_NE(r.out.find("segments: 5 5 4 5 5"), std::string::npos);
  const auto bad = cli({"parse", "3L_S1_3L_U2_B2_3L"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("U2"), std::string::npos);
  EXPECT_EQ(cli({"parse", "3X"}).code, kExitUsage);
}

TEST(Cli, FlopsTable) {
  const auto r = cli({"flops", "--structure", "5L_S1_5L_S2_4L_U2_B2_5L_U1_B1_5L", "--window",
                      "256,1024", "--retention", "0.6325,0.6325"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(first_line(r.out), golden("flops_header.csv"));
  std::istringstream rows(r.out);
  std::string line;
  std::getline(rows, line);
  std::vector<double> ratios;
  while (std::getline(rows, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 5u);
    EXPECT_NEAR(std::stod(cells[4]), 0.747, 5e-4);
    ratios.push_back(std::stod(cells[3]));
  }
  ASSERT_EQ(ratios.size(), 2u);
  EXPECT_GT(ratios[1], ratios[0]);
  EXPECT_EQ(cli({"flops", "--structure", "5L_S1_5L_U1_B1_5L", "--retention", "0.5,0.5"}).code,
            kExitUsage);
}

TEST(Cli, TrainMissingCorpusIsDataError) {
  const auto cfg = run_config("missing.cfg", scratch("nope.txt").string());
  const auto r = cli({"train", "--config", cfg.string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("data error"), std::string::npos);
}

TEST(Cli, TrainUnknownKeyIsConfigError) {
  const auto path = scratch("unknown.cfg");
  std::ofstream(path) << "widht = 3\n";
  EXPECT_EQ(cli({"train", "--config", path.string()}).code, kExitUsage);
}

TEST(Cli, TrainWritesDeterministicMetrics) {
  const auto corpus = testing::ensure_corpus_file(scratch("corpus.txt").string(), 20000);
  const auto cfg = run_config("train.cfg", corpus);
  const auto a = scratch("train_a.csv"), b = scratch("train_b.csv");
  const auto ra = cli({"train", "--config", cfg.string(), "--out", a.string()});
  ASSERT_EQ(ra.code, kExitOk) << ra.err;
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--out", b.string()}).code, kExitOk);
  const auto text = read_file(a);
  EXPECT_EQ(text, read_file(b));
  EXPECT_EQ(first_line(text), golden("metrics_header.csv"));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);  // header + steps 0, 2, 4
  const auto rc = cli({"train", "--config", cfg.string(), "--out", b.string(), "--seed", "8"});
  ASSERT_EQ(rc.code, kExitOk);
  EXPECT_NE(read_file(b), text);
}

TEST(Cli, GenerateWritesTimingRow) {
  const auto ckpt = tiny_checkpoint();
  const auto csv = scratch("timing.csv");
  const auto r = cli({"generate", "--checkpoint", ckpt.string(), "--prompt", "hello there",
                      "--max-new-tokens", "4", "--out", csv.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto text = read_file(csv);
  EXPECT_EQ(first_line(text), golden("timing_header.csv"));
  EXPECT_NE(text.find("\nsubllm,1L_S1_1L_S2_1L_U2_B2_1L_U1_B1_1L,11,4,"), std::string::npos);
  const auto again = cli({"generate", "--checkpoint", ckpt.string(), "--prompt", "hello there",
                          "--max-new-tokens", "4", "--out", csv.string()});
  EXPECT_EQ(again.out, r.out);
  const auto too_long = cli({"generate", "--checkpoint", ckpt.string(), "--prompt",
                             std::string(60, 'a'), "--max-new-tokens", "10"});
  EXPECT_EQ(too_long.code, kExitUsage);
  EXPECT_EQ(cli({"generate", "--checkpoint", scratch("absent.ckpt").string(), "--prompt", "x"})
                .code,
            kExitRuntime);
}

TEST(Cli, DumpAttentionRowsAreStochastic) {
  const auto ckpt = tiny_checkpoint();
  const auto csv = scratch("attn.csv");
  const std::string prompt = "the quick brown fox";
  const auto r = cli({"dump-attention", "--checkpoint", ckpt.string(), "--prompt", prompt,
                      "--block", "0", "--out", csv.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("overlap"), std::string::npos);
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind(golden("attention_header_prefix.csv"), 0), 0u);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2 + static_cast<long>(prompt.size()));
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 3 + prompt.size());
    EXPECT_EQ(std::stoi(cells[0]), rows);
    double s = 0.0;
    for (size_t j = 3; j < cells.size(); ++j) s += std::stod(cells[j]);
    EXPECT_NEAR(s, 1.0, 1e-5);
    ++rows;
  }
  EXPECT_EQ(rows, static_cast<int>(prompt.size()));
  EXPECT_EQ(cli({"dump-attention", "--checkpoint", ckpt.string(), "--prompt", prompt, "--block",
                 "9", "--out", csv.string()})
                .code,
            kExitUsage);
}

TEST(Cli, DumpAttentionInnerBlockLeavesDroppedRowsEmpty) {
  const auto ckpt = tiny_checkpoint();
  const auto model = load_checkpoint<float>(ckpt.string());
  const auto prompt = bytes_to_ids("an inner level sees fewer rows");
  const auto d = dump_attention(model, prompt, 2, 0.0);
  EXPECT_EQ(d.block_level, 2);
  EXPECT_LT(d.positions.size(), prompt.size());
  EXPECT_EQ(d.overlap, -1.0);
  std::ostringstream os;
  write_attention_csv(os, d);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  for (size_t p = 0; p < prompt.size(); ++p) {
    std::getline(in, line);
    std::vector<std::string> cells;
    size_t from = 0;
    for (size_t at; (at = line.find(',', from)) != std::string::npos; from = at + 1) {
      cells.push_back(line.substr(from, at - from));
    }
    cells.push_back(line.substr(from));
    ASSERT_EQ(cells.size(), 3 + d.positions.size());
    const bool in_level = std::find(d.positions.begin(), d.positions.end(),
                                    static_cast<std::int64_t>(p)) != d.positions.end();
    EXPECT_EQ(in_level, d.kept[1][p]) << "row " << p;
    for (size_t j = 3; j < cells.size(); ++j) EXPECT_EQ(cells[j].empty(), !in_level);
  }
}

TEST(Cli, PlainDecoderDump) {
  ModelConfig m;
  m.width = 16;
  m.num_heads = 2;
  m.ffn_width = 24;
  m.total_blocks = 2;
  m.structure = "2L";
  m.retention = {};
  m.context_window = 32;
  Model<float> model(m, {1, 0});
  const auto d = dump_attention(model, bytes_to_ids("abcdef"), 0, 0.0);
  ASSERT_EQ(d.positions.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 6; ++j) s += d.matrix[static_cast<size_t>(i * 6 + j)];
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
}

TEST(Cli, BenchHeaderAndElementCounts) {
  EXPECT_EQ(bench_header(), golden("bench_header.csv"));
  ModelConfig cfg;
  const auto base = cfg.baseline();
  for (std::int64_t w : {256, 512, 1024}) {
    EXPECT_LT(cache_elements(cfg, w), cache_elements(base, w));
    EXPECT_LT(activation_elements(cfg, w), activation_elements(base, w));
  }
  EXPECT_EQ(cache_elements(base, 512), 2LL * 15 * 512 * 128);
}

TEST(Cli, BenchRunsBothModels) {
  const auto corpus_free = scratch("bench.cfg");
  std::ofstream(corpus_free) << read_file(kFixtures / "tiny_run.cfg");
  const auto r = cli({"bench", "--config", corpus_free.string(), "--window", "16,32", "--reps",
                      "1", "--no-decode"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(first_line(r.out), golden("bench_header.csv"));
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 5);
  EXPECT_NE(r.out.find("\n16,baseline,5L,"), std::string::npos);
  EXPECT_NE(r.out.find("\n32,subllm,1L_S1_1L_S2_1L_U2_B2_1L_U1_B1_1L,"), std::string::npos);
}

}  // namespace
}  // namespace subllm::cli
