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

// Cooperative toy environments with a shared team reward and per-agent done
// flags.

#ifndef DER_ENVS_HPP_
#define DER_ENVS_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "der/rng.hpp"

namespace der::envs {

struct EnvSpec {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t obs_width = 0;
  std::size_t state_width = 0;
  std::size_t episode_limit = 0;
  double reward_min = 0.0;
  double reward_max = 0.0;
};

struct ResetResult {
  std::vector<double> state;
  std::vector<std::vector<double>> obs;
};

struct StepResult {
  double team_reward = 0.0;
  std::vector<double> state;
  std::vector<std::vector<double>> obs;
  std::vector<std::uint8_t> done;
  // Terminal: no bootstrapping past this step.
  bool team_done = false;
  // Episode cut by the step limit without reaching a terminal state.
  bool truncated = false;

  bool episode_over() const { return team_done || truncated; }
};

class Env {
 public:
  virtual ~Env() = default;

  virtual EnvSpec spec() const = 0;
  virtual ResetResult reset(Rng& rng) = 0;
  // Throws std::logic_error when the episode is already over and
  // std::out_of_range on invalid action indices.
  virtual StepResult step(std::span<const int> actions) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// Two-agent one-shot game; rows index agent 0's action, columns agent 1's.
class MatrixGame final : public Env {
 public:
  using Payoff = std::vector<std::vector<double>>;

  static Payoff default_payoff();

  explicit MatrixGame(Payoff payoff = default_payoff());

  EnvSpec spec() const override;
  ResetResult reset(Rng& rng) override;
  StepResult step(std::span<const int> actions) override;
  std::unique_ptr<Env> clone() const override;

  const Payoff& payoff() const { return payoff_; }

 private:
  Payoff payoff_;
  bool finished_ = true;
};

// ASCII layout. Cells: '.' floor, '#' wall, 'C' crop, 'S' switch, 'E' exit,
// 'H' harvester start, 'U' unlocker start. Rows are separated by '/' or
// newlines.
struct GridLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<char> cells;

  static GridLayout parse(std::string_view text);
  static GridLayout default_layout();
  std::string to_string() const;
  char at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
};

// Harvesters collect a crop by standing on it while an unlocker stands on a
// switch (+1 team reward per crop). An agent on the exit cell that takes the
// act action leaves the episode. The episode terminates when every crop is
// collected or every agent has left.
class SwitchHarvest final : public Env {
 public:
  enum Action : int { kUp = 0, kDown, kLeft, kRight, kStay, kAct };
  static constexpr std::size_t kNumActions = 6;
  static constexpr std::size_t kWindowChannels = 5;
  // 3x3 window x channels + (row, col) + role flag
  static constexpr std::size_t kObsWidth = 9 * kWindowChannels + 3;

  explicit SwitchHarvest(GridLayout layout = GridLayout::default_layout(),
                         std::size_t episode_limit = 50,
                         bool random_starts = false);

  EnvSpec spec() const override;
  ResetResult reset(Rng& rng) override;
  StepResult step(std::span<const int> actions) override;
  std::unique_ptr<Env> clone() const override;

  std::size_t harvester_count() const;
  bool is_unlocker(std::size_t agent) const { return unlocker_[agent] != 0; }
  std::size_t crop_count() const { return crop_cells_.size(); }
  std::size_t crops_remaining() const;
  std::pair<std::size_t, std::size_t> position(std::size_t agent) const;

 private:
  std::vector<double> observe(std::size_t agent) const;
  std::vector<double> state() const;
  bool blocked(long r, long c) const;

  GridLayout layout_;
  std::size_t episode_limit_;
  bool random_starts_;

  std::vector<std::size_t> start_cells_;
  std::vector<std::uint8_t> unlocker_;
  std::vector<std::size_t> crop_cells_;

  std::vector<std::size_t> pos_;
  std::vector<std::uint8_t> alive_;
  std::vector<std::uint8_t> crop_present_;  // per grid cell
  std::size_t t_ = 0;
  bool finished_ = true;
};

struct EnvConfig {
  std::string kind = "matrix";  // "matrix" | "switch_harvest"
  MatrixGame::Payoff payoff = MatrixGame::default_payoff();
  std::string layout = GridLayout::default_layout().to_string();
  std::size_t episode_limit = 50;
  bool random_starts = false;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

// Throws std::invalid_argument on unknown kinds or bad layouts.
std::unique_ptr<Env> make_env(const EnvConfig& config);

}  // namespace der::envs

#endif  // DER_ENVS_HPP_
