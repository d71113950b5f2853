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

// Training loop: epsilon-greedy episode collection, mixer update with the
// joint TD loss, division and prioritized selection of single-agent
// transitions, agent update with the weighted individual loss, and periodic
// target synchronization.

#ifndef DER_TRAINER_HPP_
#define DER_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "der/derbuffer.hpp"
#include "der/envs.hpp"
#include "der/qnets.hpp"
#include "der/rng.hpp"

namespace der::train {

using diff::Tensor;

enum class DivideMode { kDer, kDivideOnly, kJointBaseline };
enum class OptimizerKind { kAdam, kSgd };

std::string_view to_string(DivideMode mode);
std::optional<DivideMode> parse_divide_mode(std::string_view text);
std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer(std::string_view text);

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double anneal_steps = 50000.0;

  double at(double t) const;
  friend bool operator==(const EpsilonSchedule&,
                         const EpsilonSchedule&) = default;
};

struct TrainConfig {
  double gamma = 0.99;
  std::size_t t_max = 20000;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 5000;
  std::size_t target_period = 200;
  double lr = 5e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  EpsilonSchedule epsilon;

  // Sample-ratio warm-up; t_max is taken from this config.
  double eta_start = 0.8;
  double eta_end = 1.0;
  double eta_proportion = 0.6;

  double alpha = 0.6;
  double priority_eps = 1e-6;
  double beta_start = 0.4;
  double beta_end = 1.0;

  DivideMode mode = DivideMode::kDer;
  // Normalize the individual loss by the selected count instead of summing.
  bool mean_individual_loss = false;
  // Also apply the joint loss gradient to the agent network during the mixer
  // update (off: the mixer update touches mixer parameters only).
  bool mixer_grad_to_agents = false;

  std::size_t agent_hidden = 64;
  std::size_t agent_hidden2 = 64;
  std::size_t mixer_embed = 32;
  qnets::MixerKind mixer = qnets::MixerKind::kMonotonic;

  std::size_t eval_interval = 1000;
  std::size_t eval_episodes = 20;
  // NaN/shape validation inside every graph evaluation.
  bool checked = false;
  // Write the selected transitions of every k-th update (0 = never).
  std::size_t replay_dump_every = 0;

  replay::RatioSchedule ratio_schedule() const;
  double beta_at(double t) const;
  qnets::NetDims net_dims(const envs::EnvSpec& spec) const;
  // Throws std::invalid_argument describing the first violated range.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// --- optimizers ---------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-8);

  // grads must align with params.
  void step(qnets::ParamSet& params, std::span<const Tensor> grads);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

// --- losses -----------------------------------------------------------------

struct LossResult {
  double value = 0.0;
  std::vector<Tensor> agent_grads;  // aligned with ParamStore::agent
  std::vector<Tensor> mixer_grads;  // aligned with ParamStore::mixer
};

// Prebuilt loss graphs for one NetDims.
class LossGraphs {
 public:
  explicit LossGraphs(qnets::NetDims dims, diff::EvalOptions options = {});

  const qnets::NetDims& dims() const { return dims_; }

  // sum_r w_r * (y_r - Q_tot[r])^2. With detach_agents the chosen Q_i enter
  // the mixer as constants, so agent gradients are exactly zero.
  LossResult joint(const qnets::ParamSet& agent, const qnets::ParamSet& mixer,
                   std::span<const Tensor> inputs,
                   std::span<const Tensor> masks, const Tensor& state,
                   const Tensor& targets, const Tensor& weights,
                   bool detach_agents) const;

  // sum_j w_j * (y_j - Q(x_j, a_j))^2 over the rows of `inputs`.
  LossResult individual(const qnets::ParamSet& agent, const Tensor& inputs,
                        const Tensor& masks, const Tensor& targets,
                        const Tensor& weights) const;

 private:
  qnets::NetDims dims_;
  diff::EvalOptions options_;

  diff::Graph full_;
  qnets::AgentNetNodes full_agent_;
  qnets::JointQNodes full_q_;
  qnets::MixerNodes full_mixer_;
  diff::NodeId full_state_{}, full_y_{}, full_w_{}, full_loss_{};

  diff::Graph detached_;
  qnets::MixerNodes det_mixer_;
  diff::NodeId det_q_{}, det_state_{}, det_y_{}, det_w_{}, det_loss_{};

  diff::Graph single_;
  qnets::AgentNetNodes single_agent_;
  diff::NodeId single_x_{}, single_mask_{}, single_y_{}, single_w_{},
      single_loss_{};
};

// y = R + gamma * Q~_tot with Q~_tot zeroed at terminal rows.
Tensor joint_targets(const replay::JointBatch& batch,
                     const qnets::GreedyTarget& target, double gamma);

// Mean squared joint TD residual over the batch rows.
LossResult mixer_loss(const replay::JointBatch& batch,
                      const qnets::QNetworks& nets, const LossGraphs& losses,
                      const qnets::ParamStore& params, double gamma,
                      bool detach_agents = true);

// sum_j w_j (r_j + gamma*Q~_j - Q_j)^2 over the selected samples, or that sum
// divided by the selection size when `mean` is set. Throws
// std::invalid_argument on an empty selection.
LossResult individual_loss(
    std::span<const replay::SingleAgentTransition> candidates,
    std::span<const replay::PrioritizedSample> selected,
    const LossGraphs& losses, const qnets::ParamSet& agent, double gamma,
    bool mean = false);

// --- rollouts -----------------------------------------------------------------

// Epsilon-greedy episode. Actions are chosen per agent from that agent's own
// input row only.
replay::Episode run_episode(envs::Env& env, const qnets::QNetworks& nets,
                            const qnets::ParamSet& agent, double epsilon,
                            Rng& rng);

// Mean return of `episodes` greedy rollouts on a copy of `env`.
double evaluate(const qnets::QNetworks& nets, const qnets::ParamSet& agent,
                const envs::Env& env, std::size_t episodes, Rng& rng);

// Hard copy of online into target parameters when [t_prev, t_now) crosses a
// multiple of `period`. Returns whether a copy happened.
bool update_targets(qnets::ParamStore& params, std::size_t period,
                    std::size_t t_prev, std::size_t t_now);

// --- training loop --------------------------------------------------------------

struct UpdateMetrics {
  double loss_tot = 0.0;
  double loss_ind = 0.0;
  double mean_abs_delta = 0.0;
  double eta = 1.0;
  double epsilon = 0.0;
  std::size_t selected = 0;
};

struct Metrics {
  std::size_t t_step = 0;
  std::optional<UpdateMetrics> update;
  std::optional<double> eval_return;
};

class Trainer {
 public:
  Trainer(TrainConfig config, std::unique_ptr<envs::Env> env,
          std::uint64_t seed);

  const TrainConfig& config() const { return config_; }
  const qnets::NetDims& dims() const { return nets_.dims(); }
  const qnets::QNetworks& nets() const { return nets_; }
  const LossGraphs& losses() const { return losses_; }
  const qnets::ParamStore& params() const { return params_; }
  qnets::ParamStore& mutable_params() { return params_; }
  const replay::ReplayBuffer& buffer() const { return buffer_; }
  const envs::Env& env() const { return *env_; }
  std::size_t t_step() const { return t_step_; }
  std::size_t updates() const { return updates_; }

  double epsilon() const;

  // Collects one epsilon-greedy episode, advances t_step and stores it.
  const replay::Episode& collect_episode();

  // One update on a fresh mini-batch. Throws std::length_error while the
  // buffer holds fewer than batch_size episodes.
  UpdateMetrics train_step();

  // Greedy evaluation on a fixed-seed stream for checkpoint `index`.
  double evaluate_at(std::size_t index) const;

  void set_replay_dump(std::ostream* out) { replay_dump_ = out; }

  // Runs until t_step reaches t_max, emitting one Metrics per update or
  // evaluation (plus one evaluation at t_step 0).
  void run(const std::function<void(const Metrics&)>& sink);

 private:
  TrainConfig config_;
  std::unique_ptr<envs::Env> env_;
  std::uint64_t seed_;
  qnets::QNetworks nets_;
  LossGraphs losses_;
  qnets::ParamStore params_;
  replay::ReplayBuffer buffer_;
  Rng rollout_rng_;
  Rng sample_rng_;
  Optimizer agent_opt_;
  Optimizer mixer_opt_;
  std::size_t t_step_ = 0;
  std::size_t updates_ = 0;
  std::ostream* replay_dump_ = nullptr;
};

}  // namespace der::train

#endif  // DER_TRAINER_HPP_
