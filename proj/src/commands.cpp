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

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "der/cli.hpp"

namespace der::cli {
namespace {

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Trains one (config, seed) pair into `dir`: config.ini, metrics.csv,
// checkpoint.txt, optional checkpoints/ and replay.csv.
void train_into(const RunConfig& config, std::uint64_t seed,
                const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "config.ini", format_config(config));

  train::Trainer trainer(config.train, envs::make_env(config.env), seed);
  std::ofstream replay;
  if (config.train.replay_dump_every > 0) {
    replay.open(dir / "replay.csv", std::ios::binary | std::ios::trunc);
    if (!replay) throw std::runtime_error("cannot write replay dump");
    replay::write_replay_header(replay);
    trainer.set_replay_dump(&replay);
  }
  std::ofstream metrics(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write metrics.csv");
  metrics << kMetricsHeader << '\n';

  std::size_t last_ckpt = 0;
  trainer.run([&](const train::Metrics& m) {
    metrics << format_row(to_row(m)) << '\n';
    const std::size_t every = config.checkpoint_every;
    if (every > 0 && m.t_step / every > last_ckpt / every) {
      fs::create_directories(dir / "checkpoints");
      qnets::save_checkpoint(
          dir / "checkpoints" / ("step_" + std::to_string(m.t_step) + ".txt"),
          trainer.dims(), trainer.params());
    }
    last_ckpt = m.t_step;
  });
  metrics.flush();
  if (!metrics) throw std::runtime_error("write failed for metrics.csv");
  qnets::save_checkpoint(dir / "checkpoint.txt", trainer.dims(),
                         trainer.params());
}

}  // namespace

std::string run_to_csv(const RunConfig& config, std::uint64_t seed) {
  train::Trainer trainer(config.train, envs::make_env(config.env), seed);
  std::string out(kMetricsHeader);
  out += '\n';
  trainer.run([&](const train::Metrics& m) {
    out += format_row(to_row(m));
    out += '\n';
  });
  return out;
}

std::optional<CompareMode> parse_compare_mode(std::string_view text) {
  CompareMode mode{.name = std::string(text)};
  if (text == "der" || text == "warm-up" || text == "warmup") return mode;
  if (auto m = train::parse_divide_mode(text)) {
    mode.mode = *m;
    return mode;
  }
  constexpr std::string_view kFixed = "fixed-eta=";
  if (text.starts_with(kFixed)) {
    const std::string_view value = text.substr(kFixed.size());
    double eta = 0.0;
    auto [ptr, ec] =
        std::from_chars(value.data(), value.data() + value.size(), eta);
    if (ec != std::errc() || ptr != value.data() + value.size() ||
        !(eta > 0.0 && eta <= 1.0)) {
      return std::nullopt;
    }
    mode.fixed_eta = eta;
    return mode;
  }
  return std::nullopt;
}

train::TrainConfig apply_mode(train::TrainConfig config,
                              const CompareMode& mode) {
  config.mode = mode.mode;
  if (mode.fixed_eta) {
    config.eta_start = *mode.fixed_eta;
    config.eta_end = *mode.fixed_eta;
  }
  return config;
}

int train_cmd(const fs::path& config_path, std::uint64_t seed,
              const fs::path& out_dir, std::ostream& err) {
  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    train_into(config, seed, out_dir);
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int compare_cmd(const fs::path& config_path, std::span<const std::string> modes,
                std::span<const std::uint64_t> seeds, const fs::path& out_dir,
                std::size_t jobs, std::ostream& err) {
  RunConfig base;
  std::vector<CompareMode> parsed;
  try {
    base = load_config(config_path);
    if (modes.empty()) throw ConfigError("no modes given");
    // No seeds on the command line: use the config's [run] seeds.
    if (!seeds.empty()) base.seeds.assign(seeds.begin(), seeds.end());
    for (std::size_t i = 0; i < base.seeds.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (base.seeds[i] == base.seeds[j]) {
          throw ConfigError("duplicate seed " + std::to_string(base.seeds[i]));
        }
      }
    }
    for (const std::string& m : modes) {
      auto mode = parse_compare_mode(m);
      if (!mode) throw ConfigError("unknown mode '" + m + "'");
      if (std::any_of(parsed.begin(), parsed.end(),
                      [&](const CompareMode& p) { return p.name == m; })) {
        throw ConfigError("duplicate mode '" + m + "'");
      }
      RunConfig probe = base;
      probe.train = apply_mode(base.train, *mode);
      try {
        probe.train.validate();
      } catch (const std::exception& e) {
        throw ConfigError(m + ": " + e.what());
      }
      parsed.push_back(*mode);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  struct Job {
    std::size_t mode;
    std::uint64_t seed;
    fs::path dir;
  };
  std::vector<Job> work;
  for (std::size_t m = 0; m < parsed.size(); ++m) {
    for (std::uint64_t s : base.seeds) {
      work.push_back(
          {m, s, out_dir / parsed[m].name / ("seed_" + std::to_string(s))});
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex failure_mu;
  std::string failure;
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= work.size()) return;
      RunConfig config = base;
      config.train = apply_mode(base.train, parsed[work[k].mode]);
      config.seeds = {work[k].seed};
      try {
        train_into(config, work[k].seed, work[k].dir);
      } catch (const std::exception& e) {
        std::lock_guard lock(failure_mu);
        if (failure.empty()) failure = work[k].dir.string() + ": " + e.what();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, work.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 1; i < n_threads; ++i) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
  if (!failure.empty()) {
    err << "runtime error: " << failure << '\n';
    return kExitRuntime;
  }

  try {
    std::string summary(kSummaryHeader);
    summary += '\n';
    std::vector<Series> series;
    for (std::size_t m = 0; m < parsed.size(); ++m) {
      std::vector<std::vector<MetricsRow>> runs;
      for (const Job& job : work) {
        if (job.mode == m) runs.push_back(read_metrics(job.dir / "metrics.csv"));
      }
      Series s{.label = parsed[m].name,
               .points = summarize(runs, base.train.eval_interval),
               .band = runs.size() > 1};
      for (const SummaryPoint& p : s.points) {
        summary += parsed[m].name + ',' + std::to_string(p.t_step) + ',' +
                   fmt(p.mean) + ',' + fmt(p.p25) + ',' + fmt(p.p75) + ',' +
                   std::to_string(p.n) + '\n';
      }
      series.push_back(std::move(s));
    }
    write_file(out_dir / "summary.csv", summary);
    write_file(out_dir / "summary.svg",
               render_svg(series, "mean eval return, 25-75% band"));
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int plot_cmd(std::span<const fs::path> metrics_paths, const fs::path& out_svg,
             std::ostream& err) {
  if (metrics_paths.empty()) {
    err << "config error: no metrics files given\n";
    return kExitConfig;
  }
  try {
    std::vector<std::vector<MetricsRow>> runs;
    for (const fs::path& path : metrics_paths) {
      try {
        runs.push_back(read_metrics(path));
      } catch (const MetricsFormatError& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
      }
      if (std::none_of(runs.back().begin(), runs.back().end(),
                       [](const MetricsRow& r) { return r.eval_return; })) {
        throw std::runtime_error(path.string() + ": no eval rows");
      }
    }
    const std::string name = metrics_paths.size() == 1
                                 ? metrics_paths[0].string()
                                 : std::to_string(metrics_paths.size()) + " runs";
    Series s{.label = metrics_paths.size() == 1 ? "return" : "mean",
             .points = summarize_by_ordinal(runs),
             .band = metrics_paths.size() > 1};
    write_file(out_svg, render_svg(std::span(&s, 1), name));
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace der::cli
