// Copyright 2026 The dermarl Authors.
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

#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "der/cli.hpp"

namespace der::cli {
namespace {

constexpr std::string_view kTinyConfig = R"(
# small matrix run
[env]
kind = matrix

[network]
mixer = monotonic
agent_hidden = 8
agent_hidden2 = 8
mixer_embed = 4

[train]
t_max = 300
batch_size = 4
buffer_capacity = 50
target_period = 20

[exploration]
epsilon_anneal_steps = 100

[eval]
interval = 100
episodes = 1
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("dermarl_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_text(const fs::path& path, std::string_view text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

TEST(ConfigTest, ParsesAndRoundTrips) {
  const RunConfig c = parse_config(kTinyConfig);
  EXPECT_EQ(c.env.kind, "matrix");
  EXPECT_EQ(c.train.t_max, 300u);
  EXPECT_EQ(c.train.agent_hidden, 8u);
  EXPECT_EQ(c.train.mode, train::DivideMode::kDer);
  EXPECT_EQ(parse_config(format_config(c)), c);

  RunConfig odd = c;
  odd.train.lr = 0.1 + 0.2;
  odd.train.gamma = 0.97;
  odd.seeds = {7, 11};
  odd.env.kind = "switch_harvest";
  EXPECT_EQ(parse_config(format_config(odd)), odd);
}

TEST(ConfigTest, InlineCommentsNeedLeadingWhitespace) {
  const RunConfig c = parse_config(
      "[env]\nkind = matrix   ; one-shot\npayoff = 1,0;0,1 # identity\n"
      "[train]\ngamma = 0.9\t; discount\n");
  EXPECT_EQ(c.env.payoff, (envs::MatrixGame::Payoff{{1, 0}, {0, 1}}));
  EXPECT_EQ(c.train.gamma, 0.9);
  EXPECT_EQ(parse_config("[env]\nkind = switch_harvest\nlayout = C#H/S.U\n")
                .env.layout,
            "C#H/S.U");
}

TEST(ConfigTest, RejectsBadInput) {
  EXPECT_THROW(parse_config("[train]\nfoo = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[bogus]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\ngamma = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nbatch_size = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nmode = qmix\n"), ConfigError);
  EXPECT_THROW(parse_config("[env]\nkind = smac\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nseeds =\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/dermarl.ini"), ConfigError);
}

TEST(MetricsTest, FormatParseRoundTrip) {
  const MetricsRow eval_only{.t_step = 0, .eval_return = 4.0};
  const MetricsRow update{.t_step = 5,
                          .loss_tot = 0.25,
                          .loss_ind = 1.5,
                          .mean_abs_delta = 0.1,
                          .eta = 0.8,
                          .epsilon = 1.0,
                          .selected_count = 7};
  std::stringstream csv;
  csv << kMetricsHeader << '\n'
      << format_row(eval_only) << '\n'
      << format_row(update) << '\n';
  EXPECT_EQ(format_row(eval_only), "0,,,,,,,4");
  const auto rows = parse_metrics(csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], eval_only);
  EXPECT_EQ(rows[1], update);
}

TEST(MetricsTest, ErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      parse_metrics(in);
    } catch (const MetricsFormatError& e) {
      return e.line();
    }
    return 0;
  };
  const std::string h = std::string(kMetricsHeader) + "\n";
  EXPECT_EQ(line_of("t,x\n"), 1u);
  EXPECT_EQ(line_of(h + "0,,,,,,,1\n1,,,\n"), 3u);
  EXPECT_EQ(line_of(h + "0,,,,,,,1\nabc,,,,,,,1\n"), 3u);
  EXPECT_EQ(line_of(h + "5,,,,,,,1\n5,,,,,,,2\n"), 3u);
  EXPECT_EQ(line_of(h + "5,,,,,,,1\n4,,,,,,,2\n"), 3u);
  EXPECT_EQ(line_of(h + "0,,,,,,,1\r\n1,,,,,,,2\r\n"), 0u);
}

TEST(SummaryTest, PercentileInterpolates) {
  EXPECT_EQ(percentile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
  EXPECT_EQ(percentile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
  EXPECT_EQ(percentile({7.0}, 0.75), 7.0);
  EXPECT_THROW(percentile({}, 0.5), std::invalid_argument);
}

TEST(SummaryTest, AlignsOnIntervalAndDropsPartialPoints) {
  auto run = [](std::vector<std::pair<std::size_t, double>> evals) {
    std::vector<MetricsRow> rows;
    for (auto [t, v] : evals) rows.push_back({.t_step = t, .eval_return = v});
    return rows;
  };
  const std::vector<std::vector<MetricsRow>> runs = {
      run({{0, 1.0}, {101, 2.0}, {205, 3.0}}),
      run({{0, 3.0}, {100, 4.0}}),
  };
  const auto s = summarize(runs, 100);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].t_step, 100u);
  EXPECT_EQ(s[1].mean, 3.0);
  EXPECT_EQ(s[1].p25, 2.5);
  EXPECT_EQ(s[1].p75, 3.5);
  EXPECT_EQ(s[1].n, 2u);
  EXPECT_EQ(band_overlap(s, s), 1.0);
  std::vector<SummaryPoint> far = s;
  for (auto& p : far) p.p25 = p.p75 = p.mean = 100.0;
  EXPECT_EQ(band_overlap(s, far), 0.0);
}

TEST(CompareModeTest, Parsing) {
  EXPECT_EQ(parse_compare_mode("warm-up")->mode, train::DivideMode::kDer);
  EXPECT_EQ(parse_compare_mode("fixed-eta=0.94")->fixed_eta, 0.94);
  EXPECT_FALSE(parse_compare_mode("fixed-eta=0").has_value());
  EXPECT_FALSE(parse_compare_mode("fixed-eta=1.2").has_value());
  EXPECT_FALSE(parse_compare_mode("qmix").has_value());
  const auto fixed = apply_mode(train::TrainConfig{},
                                *parse_compare_mode("fixed-eta=0.94"));
  EXPECT_EQ(fixed.eta_start, 0.94);
  EXPECT_EQ(fixed.eta_end, 0.94);
}

TEST(CommandTest, TrainWritesArtifactsAndIsDeterministic) {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg = write_text(dir / "c.ini", kTinyConfig);
  std::ostringstream err;
  ASSERT_EQ(train_cmd(cfg, 3, dir / "a", err), kExitOk) << err.str();
  ASSERT_EQ(train_cmd(cfg, 3, dir / "b", err), kExitOk) << err.str();
  EXPECT_EQ(read_text(dir / "a" / "metrics.csv"),
            read_text(dir / "b" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "a" / "checkpoint.txt"));
  EXPECT_TRUE(fs::exists(dir / "a" / "config.ini"));
  const std::string csv = read_text(dir / "a" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, kMetricsHeader.size()), kMetricsHeader);
  EXPECT_EQ(csv, run_to_csv(parse_config(kTinyConfig), 3));
}

TEST(CommandTest, TrainExitCodes) {
  const fs::path dir = fresh_dir("train_codes");
  std::ostringstream err;
  EXPECT_EQ(train_cmd(dir / "missing.ini", 1, dir / "o", err), kExitConfig);
  const fs::path bad = write_text(dir / "bad.ini", "[train]\ngamma = 1.5\n");
  EXPECT_EQ(train_cmd(bad, 1, dir / "o", err), kExitConfig);
  const fs::path blocker = write_text(dir / "file", "x");
  const fs::path cfg = write_text(dir / "c.ini", kTinyConfig);
  EXPECT_EQ(train_cmd(cfg, 1, blocker / "sub", err), kExitRuntime);
}

TEST(CommandTest, CompareProducesOneRunPerModeAndSeed) {
  const fs::path dir = fresh_dir("compare");
  const fs::path cfg = write_text(dir / "c.ini", kTinyConfig);
  const std::vector<std::string> modes = {"warm-up", "fixed-eta=0.8"};
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::ostringstream err;
  ASSERT_EQ(compare_cmd(cfg, modes, seeds, dir / "out", 3, err), kExitOk)
      << err.str();
  std::size_t metrics_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "out")) {
    if (e.path().filename() == "metrics.csv") ++metrics_files;
  }
  EXPECT_EQ(metrics_files, modes.size() * seeds.size());
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.svg"));
  std::istringstream summary(read_text(dir / "out" / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  EXPECT_EQ(line, kSummaryHeader);
  std::size_t rows = 0;
  while (std::getline(summary, line)) {
    ++rows;
    EXPECT_TRUE(line.starts_with("warm-up,") ||
                line.starts_with("fixed-eta=0.8,"))
        << line;
    EXPECT_TRUE(line.ends_with(",5")) << line;
  }
  EXPECT_EQ(rows, 2u * 4u);  // evals at t = 0, 100, 200, 300

  const std::vector<std::string> dup = {"der", "der"};
  EXPECT_EQ(compare_cmd(cfg, dup, seeds, dir / "dup", 1, err), kExitConfig);
  const std::vector<std::uint64_t> twice = {4, 4};
  EXPECT_EQ(compare_cmd(cfg, modes, twice, dir / "twice", 1, err), kExitConfig);
  const std::vector<std::string> unknown = {"qmix"};
  EXPECT_EQ(compare_cmd(cfg, unknown, seeds, dir / "unk", 1, err), kExitConfig);
}

TEST(CommandTest, CompareDefaultsToConfigSeeds) {
  const fs::path dir = fresh_dir("compare_default");
  const fs::path cfg = write_text(
      dir / "c.ini", std::string(kTinyConfig) + "[run]\nseeds = 9,4\n");
  const std::vector<std::string> modes = {"divide-only"};
  std::ostringstream err;
  ASSERT_EQ(compare_cmd(cfg, modes, {}, dir / "out", 1, err), kExitOk)
      << err.str();
  EXPECT_TRUE(fs::exists(dir / "out" / "divide-only" / "seed_9" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "divide-only" / "seed_4" / "metrics.csv"));
  EXPECT_FALSE(fs::exists(dir / "out" / "divide-only" / "seed_1"));
}

TEST(CommandTest, PlotSingleBandAndMalformed) {
  const fs::path dir = fresh_dir("plot");
  const std::string h = std::string(kMetricsHeader) + "\n";
  const fs::path a = write_text(dir / "a.csv", h + "0,,,,,,,1\n10,,,,,,,3\n");
  const fs::path b = write_text(dir / "b.csv", h + "0,,,,,,,2\n10,,,,,,,5\n");
  std::ostringstream err;
  const std::vector<fs::path> one = {a};
  ASSERT_EQ(plot_cmd(one, dir / "one.svg", err), kExitOk);
  const std::string svg1 = read_text(dir / "one.svg");
  EXPECT_TRUE(svg1.starts_with("<svg") || svg1.starts_with("<?xml"));
  EXPECT_EQ(svg1.find("<polygon"), std::string::npos);
  const std::vector<fs::path> two = {a, b};
  ASSERT_EQ(plot_cmd(two, dir / "two.svg", err), kExitOk);
  EXPECT_NE(read_text(dir / "two.svg").find("<polygon"), std::string::npos);

  const fs::path bad = write_text(dir / "bad.csv", h + "0,,,,,,,1\nx\n");
  const std::vector<fs::path> malformed = {bad};
  std::ostringstream bad_err;
  EXPECT_EQ(plot_cmd(malformed, dir / "bad.svg", bad_err), kExitRuntime);
  EXPECT_NE(bad_err.str().find("line 3"), std::string::npos) << bad_err.str();
  EXPECT_EQ(plot_cmd({}, dir / "none.svg", err), kExitConfig);
}

}  // namespace
}  // namespace der::cli
