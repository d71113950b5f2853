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

#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "der/qnets.hpp"
#include "oracle.hpp"

namespace der::qnets {
namespace {

using diff::Bindings;
using diff::Graph;
using diff::NodeId;
using oracle::kFdTolerance;
using oracle::random_tensor;

NetDims small_dims(std::size_t n, std::size_t a, MixerKind mixer) {
  return NetDims{.n_agents = n,
                 .n_actions = a,
                 .obs_width = 3,
                 .state_width = 4,
                 .agent_hidden = 6,
                 .agent_hidden2 = 5,
                 .mixer_embed = 4,
                 .mixer = mixer};
}

TEST(NetDimsTest, InputWidthAndValidation) {
  NetDims d = small_dims(3, 4, MixerKind::kVdn);
  EXPECT_EQ(d.agent_input_width(), 3u + 4u + 3u);
  d.agent_hidden = 0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(MixerKindTest, Parse) {
  EXPECT_EQ(parse_mixer_kind("vdn"), MixerKind::kVdn);
  EXPECT_EQ(parse_mixer_kind("monotonic"), MixerKind::kMonotonic);
  EXPECT_EQ(parse_mixer_kind("qmix"), MixerKind::kMonotonic);
  EXPECT_FALSE(parse_mixer_kind("qplex").has_value());
}

TEST(InitTest, ShapesSeedsAndTargets) {
  const NetDims d = small_dims(2, 3, MixerKind::kMonotonic);
  const ParamStore p = init_params(5, d);
  EXPECT_EQ(p.agent.size(), 6u);
  EXPECT_EQ(p.mixer.size(), 10u);
  EXPECT_EQ(p.agent[*p.agent.find("agent/fc1")].shape(),
            (std::array<std::size_t, 2>{d.agent_input_width(), 6}));
  EXPECT_EQ(p.mixer[*p.mixer.find("mixer/hyper_w1")].shape(),
            (std::array<std::size_t, 2>{4, 2 * 4}));
  EXPECT_EQ(p.target_agent, p.agent);
  EXPECT_EQ(p.target_mixer, p.mixer);
  EXPECT_EQ(init_params(5, d), p);
  EXPECT_NE(init_params(6, d).agent, p.agent);
  EXPECT_TRUE(init_params(5, small_dims(2, 3, MixerKind::kVdn)).mixer.empty());
}

TEST(ParamSetTest, FlattenRoundTrip) {
  ParamStore p = init_params(1, small_dims(2, 3, MixerKind::kMonotonic));
  std::vector<double> flat = p.agent.flatten();
  EXPECT_EQ(flat.size(), p.agent.scalar_count());
  for (double& v : flat) v *= 2.0;
  ParamSet copy = p.agent;
  copy.assign_flat(flat);
  EXPECT_EQ(copy.flatten(), flat);
  flat.pop_back();
  EXPECT_THROW(copy.assign_flat(flat), std::invalid_argument);
}

TEST(GreedyTest, LowestIndexOnTies) {
  const std::vector<double> q = {1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(greedy_action(q), 1u);
  const std::vector<double> flat = {0.0, 0.0};
  EXPECT_EQ(greedy_action(flat), 0u);
}

TEST(AgentInputTest, Layout) {
  const NetDims d = small_dims(3, 4, MixerKind::kVdn);
  const std::vector<double> obs = {0.1, 0.2, 0.3};
  const auto x = agent_input(obs, 2, 1, d);
  const std::vector<double> expected = {0.1, 0.2, 0.3, 0, 0, 1, 0, 0, 1, 0};
  EXPECT_EQ(x, expected);
  const auto first = agent_input(obs, -1, 0, d);
  const std::vector<double> expected_first = {0.1, 0.2, 0.3, 0, 0,
                                              0,   0,   1,   0, 0};
  EXPECT_EQ(first, expected_first);
}

TEST(AgentNetTest, SingleSampleMatchesBatched) {
  const NetDims d = small_dims(2, 3, MixerKind::kVdn);
  const ParamStore p = init_params(3, d);
  QNetworks nets(d);
  const std::vector<double> obs = {0.5, -0.5, 1.0};
  const auto x = agent_input(obs, 1, 0, d);
  const Tensor batched =
      nets.agent_values(p.agent, Tensor(1, x.size(), x));
  const std::vector<double> last = {0, 1, 0};
  const std::vector<double> id = {1, 0};
  const auto single = agent_q(p.agent, d, obs, last, id);
  ASSERT_EQ(single.size(), 3u);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(single[a], batched[a]);
}

TEST(MixerTest, VdnIsSumWithUnitGradients) {
  const NetDims d = small_dims(3, 2, MixerKind::kVdn);
  const ParamStore p = init_params(1, d);
  const std::vector<double> q = {1.0, -2.0, 0.5};
  const std::vector<double> s(4, 0.3);
  const QEval e = mix(p.mixer, d, q, s);
  EXPECT_DOUBLE_EQ(e.q_tot, -0.5);
  EXPECT_EQ(e.grads_g, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(MixerTest, MonotonicGradientsNonNegative) {
  const NetDims d = small_dims(3, 2, MixerKind::kMonotonic);
  QNetworks nets(d);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = derive_rng(seed, 9);
    const ParamStore p = init_params(seed, d);
    const Tensor q = random_tensor(rng, 6, 3, -5.0, 5.0);
    const Tensor s = random_tensor(rng, 6, 4);
    const MixResult r = nets.mix_with_grads(p.mixer, q, s);
    for (double g : r.grads.data()) EXPECT_GE(g, 0.0);
  }
}

// dQ_tot/dq_i from the probe against central differences on the mixer input.
TEST(MixerTest, ProbeGradientsMatchFiniteDifferences) {
  const NetDims d = small_dims(3, 2, MixerKind::kMonotonic);
  QNetworks nets(d);
  Rng rng = derive_rng(4, 4);
  const ParamStore p = init_params(4, d);
  const Tensor q = random_tensor(rng, 5, 3);
  const Tensor s = random_tensor(rng, 5, 4);
  const MixResult r = nets.mix_with_grads(p.mixer, q, s);
  for (std::size_t row = 0; row < 5; ++row) {
    for (std::size_t i = 0; i < 3; ++i) {
      Tensor up = q, down = q;
      up(row, i) += oracle::kFdStep;
      down(row, i) -= oracle::kFdStep;
      const double num = (nets.mix_values(p.mixer, up, s)[row] -
                          nets.mix_values(p.mixer, down, s)[row]) /
                         (2.0 * oracle::kFdStep);
      EXPECT_NEAR(r.grads(row, i), num, 1e-6 * std::max(1.0, std::fabs(num)));
    }
  }
}

TEST(ComposedGradientTest, AgentAndMixerParametersMatchFiniteDifferences) {
  for (MixerKind kind : {MixerKind::kVdn, MixerKind::kMonotonic}) {
    const NetDims d = small_dims(3, 3, kind);
    Rng rng = derive_rng(11, static_cast<std::uint64_t>(kind));
    ParamStore p = init_params(11, d);
    Graph g;
    AgentNetNodes agent = declare_agent(g);
    JointQNodes joint = declare_joint_q(g, agent, d.n_agents);
    MixerNodes mixer = declare_mixer(g, kind);
    NodeId state = g.constant("state");
    NodeId target = g.constant("y");
    NodeId q_tot = mixer_forward(g, mixer, joint.q, state);
    NodeId loss = g.sum(g.squared_error(q_tot, target));
    Bindings b;
    bind_agent(b, agent, p.agent);
    std::vector<Tensor> inputs, masks;
    for (std::size_t i = 0; i < d.n_agents; ++i) {
      inputs.push_back(random_tensor(rng, 4, d.agent_input_width()));
      std::vector<int> acts;
      for (int r = 0; r < 4; ++r) acts.push_back((r + static_cast<int>(i)) % 3);
      masks.push_back(action_mask(acts, d.n_actions));
    }
    bind_joint_q(b, joint, inputs, masks, d.n_agents);
    bind_mixer(b, mixer, p.mixer, d);
    b.bind(state, random_tensor(rng, 4, d.state_width));
    b.bind(target, random_tensor(rng, 4, 1, -3.0, 3.0));
    for (NodeId leaf : agent.params) {
      EXPECT_LE(oracle::gradient_check(g, b, loss, leaf), kFdTolerance);
    }
    for (NodeId leaf : mixer.params) {
      EXPECT_LE(oracle::gradient_check(g, b, loss, leaf), kFdTolerance);
    }
  }
}

TEST(GreedyTargetTest, DoneAgentsContributeZero) {
  const NetDims d = small_dims(2, 3, MixerKind::kVdn);
  const ParamStore p = init_params(2, d);
  QNetworks nets(d);
  Rng rng = derive_rng(2, 2);
  std::vector<Tensor> next = {random_tensor(rng, 2, d.agent_input_width()),
                              random_tensor(rng, 2, d.agent_input_width())};
  Tensor state = random_tensor(rng, 2, d.state_width);
  Tensor done(2, 2, {0, 1, 0, 0});
  const GreedyTarget t =
      nets.greedy_target(p.agent, p.mixer, next, state, &done);
  EXPECT_EQ(t.per_agent(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(t.q_tot[0], t.per_agent(0, 0));
  EXPECT_DOUBLE_EQ(t.q_tot[1], t.per_agent(1, 0) + t.per_agent(1, 1));
}

// Per-agent greedy maximization equals exhaustive joint maximization.
TEST(GreedyTargetTest, MatchesBruteForceForMonotonicMixers) {
  for (std::uint64_t draw = 0; draw < 30; ++draw) {
    Rng rng = derive_rng(77, draw);
    const std::size_t n = 1 + draw % 3;
    const std::size_t a = 2 + draw % 4;
    const NetDims d = small_dims(n, a, MixerKind::kMonotonic);
    const ParamStore p = init_params(draw, d);
    QNetworks nets(d);
    std::vector<Tensor> next;
    Tensor per_agent(n, a);
    for (std::size_t i = 0; i < n; ++i) {
      next.push_back(random_tensor(rng, 1, d.agent_input_width()));
      const Tensor v = nets.agent_values(p.agent, next.back());
      for (std::size_t k = 0; k < a; ++k) per_agent(i, k) = v[k];
    }
    const Tensor state = random_tensor(rng, 1, d.state_width);
    const GreedyTarget t = nets.greedy_target(p.agent, p.mixer, next, state);
    EXPECT_EQ(t.q_tot[0],
              oracle::brute_force_max(nets, p.mixer, per_agent, state));
  }
}

TEST(CheckpointTest, RoundTripIsExact) {
  const NetDims d = small_dims(3, 4, MixerKind::kMonotonic);
  ParamStore p = init_params(8, d);
  p.agent[0](0, 0) = 0.1 + 0.2;  // not exactly representable in short form
  const auto path = std::filesystem::temp_directory_path() / "der_ckpt_test.txt";
  save_checkpoint(path, d, p);
  const Checkpoint c = load_checkpoint(path);
  EXPECT_EQ(c.dims, d);
  EXPECT_EQ(c.params, p);
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "der_ckpt_bad.txt";
  {
    std::ofstream out(path);
    out << "not-a-checkpoint 7\n";
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), std::runtime_error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace der::qnets
