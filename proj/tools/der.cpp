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

// der train | compare | plot

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "der/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = der::cli;
  CLI::App app{"Discriminative experience replay for cooperative MARL"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  auto* train = app.add_subcommand("train", "Train one seed");
  train->add_option("--config", config, "INI run config")->required();
  train->add_option("--seed", seed, "RNG seed")->required();
  train->add_option("--out", out, "Output directory")->required();

  std::vector<std::string> modes;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  auto* compare =
      app.add_subcommand("compare", "Train modes x seeds and summarize");
  compare->add_option("--config", config, "INI run config")->required();
  compare->add_option("--modes", modes, "Comma-separated modes")
      ->required()
      ->delimiter(',');
  compare->add_option("--seeds", seeds,
                      "Comma-separated seeds (default: [run] seeds)")
      ->delimiter(',');
  compare->add_option("--out", out, "Output directory")->required();
  compare->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  std::vector<std::string> inputs;
  auto* plot = app.add_subcommand("plot", "Render learning curves as SVG");
  plot->add_option("--in", inputs, "Metrics CSV files")
      ->required()
      ->delimiter(',');
  plot->add_option("--out", out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  if (*train) return cli::train_cmd(config, seed, out, std::cerr);
  if (*compare) {
    return cli::compare_cmd(config, modes, seeds, out, jobs, std::cerr);
  }
  std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
  return cli::plot_cmd(paths, out, std::cerr);
}
