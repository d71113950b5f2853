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

#include <gtest/gtest.h>

#include "der/envs.hpp"

namespace der::envs {
namespace {

using A = SwitchHarvest::Action;

TEST(MatrixGameTest, PayoffAndSingleStepEpisodes) {
  MatrixGame game;
  const EnvSpec spec = game.spec();
  EXPECT_EQ(spec.n_agents, 2u);
  EXPECT_EQ(spec.n_actions, 3u);
  EXPECT_EQ(spec.episode_limit, 1u);
  EXPECT_EQ(spec.reward_max, 10.0);
  Rng rng(1);
  const auto payoff = MatrixGame::default_payoff();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      game.reset(rng);
      const std::vector<int> acts = {a, b};
      const StepResult r = game.step(acts);
      EXPECT_EQ(r.team_reward, payoff[a][b]);
      EXPECT_TRUE(r.team_done);
      EXPECT_TRUE(r.episode_over());
      EXPECT_EQ(r.done, (std::vector<std::uint8_t>{1, 1}));
      EXPECT_THROW(game.step(acts), std::logic_error);
    }
  }
}

TEST(MatrixGameTest, RejectsBadInput) {
  EXPECT_THROW(MatrixGame({{1, 2}, {3}}), std::invalid_argument);
  MatrixGame game;
  Rng rng(1);
  game.reset(rng);
  const std::vector<int> bad = {0, 3};
  EXPECT_THROW(game.step(bad), std::out_of_range);
}

TEST(GridLayoutTest, ParseAndRoundTrip) {
  const GridLayout g = GridLayout::default_layout();
  EXPECT_EQ(g.rows, 7u);
  EXPECT_EQ(g.cols, 7u);
  EXPECT_EQ(GridLayout::parse(g.to_string()).cells, g.cells);
  EXPECT_EQ(GridLayout::parse("C.\nHS\nU.").rows, 3u);
  EXPECT_THROW(GridLayout::parse(""), std::invalid_argument);
  EXPECT_THROW(GridLayout::parse("..x"), std::invalid_argument);
  EXPECT_THROW(GridLayout::parse("../."), std::invalid_argument);
}

TEST(SwitchHarvestTest, SpecOfDefaultLayout) {
  SwitchHarvest env;
  const EnvSpec spec = env.spec();
  EXPECT_EQ(spec.n_agents, 4u);
  EXPECT_EQ(spec.n_actions, 6u);
  EXPECT_EQ(spec.obs_width, SwitchHarvest::kObsWidth);
  EXPECT_EQ(spec.state_width, 49u + 12u);
  EXPECT_EQ(env.harvester_count(), 3u);
  EXPECT_TRUE(env.is_unlocker(3));
  EXPECT_FALSE(env.is_unlocker(0));
  EXPECT_EQ(spec.reward_max, 3.0);
}

TEST(SwitchHarvestTest, HarvestRequiresSwitch) {
  SwitchHarvest env;
  Rng rng(1);
  env.reset(rng);
  // Harvester 0 steps onto its crop while the unlocker stays off the switch.
  std::vector<int> acts = {A::kUp, A::kStay, A::kStay, A::kStay};
  StepResult r = env.step(acts);
  EXPECT_EQ(r.team_reward, 0.0);
  EXPECT_EQ(env.crops_remaining(), 3u);
  // Unlocker reaches the switch: the harvester on the crop collects it.
  acts = {A::kStay, A::kStay, A::kStay, A::kUp};
  r = env.step(acts);
  EXPECT_EQ(r.team_reward, 1.0);
  EXPECT_EQ(env.crops_remaining(), 2u);
  // The other two harvest in one step.
  acts = {A::kStay, A::kUp, A::kUp, A::kStay};
  r = env.step(acts);
  EXPECT_EQ(r.team_reward, 2.0);
  EXPECT_TRUE(r.team_done);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.done, (std::vector<std::uint8_t>(4, 1)));
}

TEST(SwitchHarvestTest, WallsBlockAndLimitTruncates) {
  SwitchHarvest env(GridLayout::default_layout(), 3);
  Rng rng(1);
  env.reset(rng);
  const auto start = env.position(0);
  std::vector<int> acts = {A::kLeft, A::kStay, A::kStay, A::kStay};
  env.step(acts);
  EXPECT_EQ(env.position(0).second, start.second - 1);
  env.step(acts);
  StepResult r = env.step(acts);
  EXPECT_EQ(env.position(0).second, 0u);  // stopped at the edge
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.team_done);
  EXPECT_TRUE(r.episode_over());
  EXPECT_EQ(r.done, (std::vector<std::uint8_t>(4, 0)));
}

TEST(SwitchHarvestTest, ExitSetsPerAgentDone) {
  SwitchHarvest env(GridLayout::parse("C..\nHSE\n.U."), 10);
  Rng rng(1);
  env.reset(rng);
  ASSERT_EQ(env.spec().n_agents, 2u);
  // Unlocker (agent 1) walks to the exit and leaves; the harvester continues.
  std::vector<int> acts = {A::kStay, A::kRight};
  env.step(acts);
  acts = {A::kStay, A::kUp};
  env.step(acts);
  acts = {A::kStay, A::kAct};
  StepResult r = env.step(acts);
  EXPECT_EQ(r.done, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_FALSE(r.team_done);
  // Observations of a departed agent are all zero.
  for (double v : r.obs[1]) EXPECT_EQ(v, 0.0);
}

TEST(SwitchHarvestTest, ObservationLayout) {
  SwitchHarvest env;
  Rng rng(1);
  const ResetResult r = env.reset(rng);
  ASSERT_EQ(r.obs.size(), 4u);
  for (const auto& o : r.obs) EXPECT_EQ(o.size(), SwitchHarvest::kObsWidth);
  EXPECT_EQ(r.obs[0].back(), 0.0);  // harvester role flag
  EXPECT_EQ(r.obs[3].back(), 1.0);  // unlocker role flag
  EXPECT_EQ(r.state.size(), env.spec().state_width);
}

TEST(SwitchHarvestTest, CloneAndResetAreDeterministic) {
  SwitchHarvest env(GridLayout::default_layout(), 20, true);
  Rng a(3), b(3);
  const ResetResult ra = env.reset(a);
  auto copy = env.clone();
  const ResetResult rb = copy->reset(b);
  EXPECT_EQ(ra.obs, rb.obs);
  EXPECT_EQ(ra.state, rb.state);
  const std::vector<int> acts = {A::kUp, A::kDown, A::kLeft, A::kRight};
  const StepResult sa = env.step(acts);
  const StepResult sb = copy->step(acts);
  EXPECT_EQ(sa.state, sb.state);
}

TEST(MakeEnvTest, Kinds) {
  EXPECT_EQ(make_env(EnvConfig{.kind = "matrix"})->spec().n_agents, 2u);
  EXPECT_EQ(make_env(EnvConfig{.kind = "switch_harvest"})->spec().n_agents, 4u);
  EXPECT_THROW(make_env(EnvConfig{.kind = "smac"}), std::invalid_argument);
}

}  // namespace
}  // namespace der::envs
