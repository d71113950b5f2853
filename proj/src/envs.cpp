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

#include "der/envs.hpp"

#include <algorithm>
#include <stdexcept>

namespace der::envs {

// ---------------------------------------------------------------------------
// MatrixGame

MatrixGame::Payoff MatrixGame::default_payoff() {
  return {{10.0, 2.0, 0.0}, {2.0, 4.0, 2.0}, {0.0, 2.0, 6.0}};
}

MatrixGame::MatrixGame(Payoff payoff) : payoff_(std::move(payoff)) {
  if (payoff_.empty()) throw std::invalid_argument("empty payoff matrix");
  for (const auto& row : payoff_) {
    if (row.size() != payoff_.size()) {
      throw std::invalid_argument("payoff matrix must be square");
    }
  }
}

EnvSpec MatrixGame::spec() const {
  double lo = payoff_[0][0], hi = payoff_[0][0];
  for (const auto& row : payoff_) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return EnvSpec{.n_agents = 2,
                 .n_actions = payoff_.size(),
                 .obs_width = 1,
                 .state_width = 1,
                 .episode_limit = 1,
                 .reward_min = lo,
                 .reward_max = hi};
}

ResetResult MatrixGame::reset(Rng& /*rng*/) {
  finished_ = false;
  return ResetResult{{1.0}, {{1.0}, {1.0}}};
}

StepResult MatrixGame::step(std::span<const int> actions) {
  if (finished_) throw std::logic_error("step on a finished episode");
  if (actions.size() != 2) throw std::invalid_argument("expected 2 actions");
  for (int a : actions) {
    if (a < 0 || static_cast<std::size_t>(a) >= payoff_.size()) {
      throw std::out_of_range("action index out of range");
    }
  }
  finished_ = true;
  StepResult r;
  r.team_reward = payoff_[static_cast<std::size_t>(actions[0])]
                         [static_cast<std::size_t>(actions[1])];
  r.state = {1.0};
  r.obs = {{1.0}, {1.0}};
  r.done = {1, 1};
  r.team_done = true;
  return r;
}

std::unique_ptr<Env> MatrixGame::clone() const {
  return std::make_unique<MatrixGame>(*this);
}

// ---------------------------------------------------------------------------
// GridLayout

GridLayout GridLayout::parse(std::string_view text) {
  GridLayout g;
  std::vector<std::string> lines;
  std::string current;
  for (char ch : text) {
    if (ch == '/' || ch == '\n') {
      if (!current.empty()) lines.push_back(current);
      current.clear();
    } else if (ch != ' ' && ch != '\r' && ch != '\t') {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(current);
  if (lines.empty()) throw std::invalid_argument("empty grid layout");
  g.rows = lines.size();
  g.cols = lines.front().size();
  for (const std::string& line : lines) {
    if (line.size() != g.cols) {
      throw std::invalid_argument("grid layout rows differ in length");
    }
    for (char ch : line) {
      if (std::string_view(".#CSEHU").find(ch) == std::string_view::npos) {
        throw std::invalid_argument(std::string("unknown layout cell '") + ch +
                                    "'");
      }
      g.cells.push_back(ch);
    }
  }
  return g;
}

GridLayout GridLayout::default_layout() {
  return parse(
      ".......\n"
      ".C.C.C.\n"
      ".H.H.H.\n"
      "...S...\n"
      "...U...\n"
      ".......\n"
      "...E...\n");
}

std::string GridLayout::to_string() const {
  std::string out;
  for (std::size_t r = 0; r < rows; ++r) {
    if (r > 0) out.push_back('/');
    out.append(cells.begin() + static_cast<std::ptrdiff_t>(r * cols),
               cells.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SwitchHarvest

SwitchHarvest::SwitchHarvest(GridLayout layout, std::size_t episode_limit,
                             bool random_starts)
    : layout_(std::move(layout)),
      episode_limit_(episode_limit),
      random_starts_(random_starts) {
  if (episode_limit_ == 0) throw std::invalid_argument("episode limit is 0");
  bool has_switch = false;
  // Harvesters first, then unlockers, each in reading order.
  for (char role : {'H', 'U'}) {
    for (std::size_t i = 0; i < layout_.cells.size(); ++i) {
      if (layout_.cells[i] == role) {
        start_cells_.push_back(i);
        unlocker_.push_back(role == 'U' ? 1 : 0);
      }
    }
  }
  for (std::size_t i = 0; i < layout_.cells.size(); ++i) {
    if (layout_.cells[i] == 'C') crop_cells_.push_back(i);
    if (layout_.cells[i] == 'S') has_switch = true;
  }
  if (harvester_count() == 0 || harvester_count() == start_cells_.size()) {
    throw std::invalid_argument(
        "layout needs at least one harvester and one unlocker");
  }
  if (crop_cells_.empty() || !has_switch) {
    throw std::invalid_argument("layout needs a crop and a switch");
  }
}

std::size_t SwitchHarvest::harvester_count() const {
  return static_cast<std::size_t>(
      std::count(unlocker_.begin(), unlocker_.end(), 0));
}

std::size_t SwitchHarvest::crops_remaining() const {
  return static_cast<std::size_t>(
      std::count(crop_present_.begin(), crop_present_.end(), 1));
}

std::pair<std::size_t, std::size_t> SwitchHarvest::position(
    std::size_t agent) const {
  return {pos_.at(agent) / layout_.cols, pos_.at(agent) % layout_.cols};
}

EnvSpec SwitchHarvest::spec() const {
  const std::size_t n = start_cells_.size();
  return EnvSpec{.n_agents = n,
                 .n_actions = kNumActions,
                 .obs_width = kObsWidth,
                 .state_width = layout_.cells.size() + 3 * n,
                 .episode_limit = episode_limit_,
                 .reward_min = 0.0,
                 .reward_max = static_cast<double>(harvester_count())};
}

bool SwitchHarvest::blocked(long r, long c) const {
  if (r < 0 || c < 0 || r >= static_cast<long>(layout_.rows) ||
      c >= static_cast<long>(layout_.cols)) {
    return true;
  }
  return layout_.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) ==
         '#';
}

std::vector<double> SwitchHarvest::observe(std::size_t agent) const {
  std::vector<double> obs(kObsWidth, 0.0);
  if (!alive_[agent]) return obs;
  const auto [row, col] = position(agent);
  std::size_t k = 0;
  for (long dr = -1; dr <= 1; ++dr) {
    for (long dc = -1; dc <= 1; ++dc, k += kWindowChannels) {
      const long r = static_cast<long>(row) + dr;
      const long c = static_cast<long>(col) + dc;
      if (blocked(r, c)) {
        obs[k] = 1.0;
        continue;
      }
      const std::size_t cell =
          static_cast<std::size_t>(r) * layout_.cols + static_cast<std::size_t>(c);
      const char ch = layout_.cells[cell];
      obs[k + 1] = crop_present_[cell] ? 1.0 : 0.0;
      obs[k + 2] = ch == 'S' ? 1.0 : 0.0;
      obs[k + 3] = ch == 'E' ? 1.0 : 0.0;
      for (std::size_t j = 0; j < pos_.size(); ++j) {
        if (j != agent && alive_[j] && pos_[j] == cell) obs[k + 4] = 1.0;
      }
    }
  }
  const double rden = layout_.rows > 1 ? double(layout_.rows - 1) : 1.0;
  const double cden = layout_.cols > 1 ? double(layout_.cols - 1) : 1.0;
  obs[k] = static_cast<double>(row) / rden;
  obs[k + 1] = static_cast<double>(col) / cden;
  obs[k + 2] = unlocker_[agent] ? 1.0 : 0.0;
  return obs;
}

std::vector<double> SwitchHarvest::state() const {
  std::vector<double> s;
  s.reserve(layout_.cells.size() + 3 * pos_.size());
  for (std::uint8_t c : crop_present_) s.push_back(c ? 1.0 : 0.0);
  const double rden = layout_.rows > 1 ? double(layout_.rows - 1) : 1.0;
  const double cden = layout_.cols > 1 ? double(layout_.cols - 1) : 1.0;
  for (std::size_t i = 0; i < pos_.size(); ++i) {
    const auto [row, col] = position(i);
    s.push_back(static_cast<double>(row) / rden);
    s.push_back(static_cast<double>(col) / cden);
    s.push_back(alive_[i] ? 1.0 : 0.0);
  }
  return s;
}

ResetResult SwitchHarvest::reset(Rng& rng) {
  const std::size_t n = start_cells_.size();
  pos_ = start_cells_;
  if (random_starts_) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < layout_.cells.size(); ++i) {
      if (layout_.cells[i] != '#') free.push_back(i);
    }
    for (std::size_t i = 0; i < n; ++i) pos_[i] = free[uniform_index(rng, free.size())];
  }
  alive_.assign(n, 1);
  crop_present_.assign(layout_.cells.size(), 0);
  for (std::size_t c : crop_cells_) crop_present_[c] = 1;
  t_ = 0;
  finished_ = false;
  ResetResult out;
  out.state = state();
  for (std::size_t i = 0; i < n; ++i) out.obs.push_back(observe(i));
  return out;
}

StepResult SwitchHarvest::step(std::span<const int> actions) {
  if (finished_) throw std::logic_error("step on a finished episode");
  const std::size_t n = start_cells_.size();
  if (actions.size() != n) throw std::invalid_argument("wrong action count");
  for (int a : actions) {
    if (a < 0 || a >= static_cast<int>(kNumActions)) {
      throw std::out_of_range("action index out of range");
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!alive_[i]) continue;
    const auto [row, col] = position(i);
    long r = static_cast<long>(row), c = static_cast<long>(col);
    switch (actions[i]) {
      case kUp: --r; break;
      case kDown: ++r; break;
      case kLeft: --c; break;
      case kRight: ++c; break;
      case kAct:
        if (layout_.cells[pos_[i]] == 'E') alive_[i] = 0;
        break;
      default: break;
    }
    if (!blocked(r, c)) {
      pos_[i] = static_cast<std::size_t>(r) * layout_.cols +
                static_cast<std::size_t>(c);
    }
  }

  bool unlocked = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive_[i] && unlocker_[i] && layout_.cells[pos_[i]] == 'S') {
      unlocked = true;
    }
  }
  StepResult out;
  if (unlocked) {
    for (std::size_t i = 0; i < n; ++i) {
      if (alive_[i] && !unlocker_[i] && crop_present_[pos_[i]]) {
        crop_present_[pos_[i]] = 0;
        out.team_reward += 1.0;
      }
    }
  }
  ++t_;
  const bool all_left =
      std::none_of(alive_.begin(), alive_.end(), [](auto a) { return a != 0; });
  out.team_done = crops_remaining() == 0 || all_left;
  out.truncated = !out.team_done && t_ >= episode_limit_;
  finished_ = out.episode_over();
  out.state = state();
  for (std::size_t i = 0; i < n; ++i) {
    out.obs.push_back(observe(i));
    out.done.push_back(alive_[i] ? (out.team_done ? 1 : 0) : 1);
  }
  return out;
}

std::unique_ptr<Env> SwitchHarvest::clone() const {
  return std::make_unique<SwitchHarvest>(*this);
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const EnvConfig& config) {
  if (config.kind == "matrix") {
    return std::make_unique<MatrixGame>(config.payoff);
  }
  if (config.kind == "switch_harvest") {
    return std::make_unique<SwitchHarvest>(GridLayout::parse(config.layout),
                                           config.episode_limit,
                                           config.random_starts);
  }
  throw std::invalid_argument("unknown environment kind '" + config.kind + "'");
}

}  // namespace der::envs
