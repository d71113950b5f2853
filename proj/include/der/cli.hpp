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

// Run management: INI run configs, the metrics CSV schema, seed summaries,
// SVG learning curves and the train/compare/plot commands.

#ifndef DER_CLI_HPP_
#define DER_CLI_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "der/envs.hpp"
#include "der/trainer.hpp"

namespace der::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- run config -----------------------------------------------------------------

struct RunConfig {
  train::TrainConfig train;
  envs::EnvConfig env;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  // Intermediate checkpoint cadence in environment steps (0 = final only).
  std::size_t checkpoint_every = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Throws ConfigError on syntax errors, unknown sections or keys, malformed
// values and out-of-range settings (including an invalid environment).
RunConfig parse_config(std::string_view text);
RunConfig load_config(const fs::path& path);
// Canonical form: every key, every section. parse_config(format_config(c))
// == c for any valid c.
std::string format_config(const RunConfig& config);

// --- metrics CSV ----------------------------------------------------------------

inline constexpr std::string_view kMetricsHeader =
    "t_step,L_tot,L_ind,mean_abs_delta,eta,epsilon,selected_count,eval_return";

struct MetricsRow {
  std::size_t t_step = 0;
  std::optional<double> loss_tot, loss_ind, mean_abs_delta, eta, epsilon;
  std::optional<std::size_t> selected_count;
  std::optional<double> eval_return;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

MetricsRow to_row(const train::Metrics& metrics);
// Shortest round-trip decimal; blank fields for absent values.
std::string format_row(const MetricsRow& row);

class MetricsFormatError : public std::runtime_error {
 public:
  MetricsFormatError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Throws MetricsFormatError (1-based line numbers) on a missing or wrong
// header, a wrong field count, an unparsable field, or non-increasing t_step.
std::vector<MetricsRow> parse_metrics(std::istream& in);
std::vector<MetricsRow> read_metrics(const fs::path& path);

// --- summaries ------------------------------------------------------------------

// Linear interpolation between closest ranks; q in [0, 1].
double percentile(std::vector<double> values, double q);

struct SummaryPoint {
  std::size_t t_step = 0;  // nominal eval point
  double mean = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  std::size_t n = 0;
};

// Aligns the eval rows of each run on floor(t_step / interval) * interval and
// summarizes every point reached by all runs.
std::vector<SummaryPoint> summarize(
    std::span<const std::vector<MetricsRow>> runs, std::size_t interval);

// Aligns by eval ordinal instead; x is the mean t_step of that ordinal.
std::vector<SummaryPoint> summarize_by_ordinal(
    std::span<const std::vector<MetricsRow>> runs);

// Fraction of common points where the [p25, p75] intervals intersect.
double band_overlap(std::span<const SummaryPoint> a,
                    std::span<const SummaryPoint> b);

inline constexpr std::string_view kSummaryHeader =
    "mode,t_step,mean_return,p25,p75,n_seeds";

// --- plots ----------------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<SummaryPoint> points;
  bool band = false;
};

std::string render_svg(std::span<const Series> series, std::string_view title);

// --- compare modes --------------------------------------------------------------

// "joint-baseline", "divide-only", "der" / "warm-up" (configured schedule),
// or "fixed-eta=X" (der with a constant ratio X).
struct CompareMode {
  std::string name;
  train::DivideMode mode = train::DivideMode::kDer;
  std::optional<double> fixed_eta;
};

std::optional<CompareMode> parse_compare_mode(std::string_view text);
train::TrainConfig apply_mode(train::TrainConfig config, const CompareMode& mode);

// --- commands -------------------------------------------------------------------

// Each returns an exit status and reports failures on `err`.
int train_cmd(const fs::path& config_path, std::uint64_t seed,
              const fs::path& out_dir, std::ostream& err);
// An empty `seeds` falls back to the config's [run] seeds.
int compare_cmd(const fs::path& config_path,
                std::span<const std::string> modes,
                std::span<const std::uint64_t> seeds, const fs::path& out_dir,
                std::size_t jobs, std::ostream& err);
int plot_cmd(std::span<const fs::path> metrics_paths, const fs::path& out_svg,
             std::ostream& err);

// Runs one training job without touching the filesystem. Deterministic in
// (config, seed); the returned text is the full metrics CSV.
std::string run_to_csv(const RunConfig& config, std::uint64_t seed);

}  // namespace der::cli

#endif  // DER_CLI_HPP_
