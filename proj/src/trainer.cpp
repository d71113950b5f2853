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

#include "der/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace der::train {

using diff::Bindings;
using diff::NodeId;
using diff::SumAxis;
using qnets::ParamSet;
using qnets::ParamStore;

std::string_view to_string(DivideMode mode) {
  switch (mode) {
    case DivideMode::kDer: return "der";
    case DivideMode::kDivideOnly: return "divide-only";
    case DivideMode::kJointBaseline: return "joint-baseline";
  }
  return "?";
}

std::optional<DivideMode> parse_divide_mode(std::string_view text) {
  if (text == "der") return DivideMode::kDer;
  if (text == "divide-only") return DivideMode::kDivideOnly;
  if (text == "joint-baseline") return DivideMode::kJointBaseline;
  return std::nullopt;
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd") return OptimizerKind::kSgd;
  return std::nullopt;
}

double EpsilonSchedule::at(double t) const {
  if (anneal_steps <= 0.0 || t >= anneal_steps) return end;
  return start + (end - start) * (t / anneal_steps);
}

// ---------------------------------------------------------------------------
// TrainConfig

replay::RatioSchedule TrainConfig::ratio_schedule() const {
  return replay::RatioSchedule{eta_start, eta_end, eta_proportion,
                               static_cast<double>(t_max)};
}

double TrainConfig::beta_at(double t) const {
  const double frac = std::min(1.0, t / static_cast<double>(t_max));
  return beta_start + (beta_end - beta_start) * frac;
}

qnets::NetDims TrainConfig::net_dims(const envs::EnvSpec& spec) const {
  return qnets::NetDims{.n_agents = spec.n_agents,
                        .n_actions = spec.n_actions,
                        .obs_width = spec.obs_width,
                        .state_width = spec.state_width,
                        .agent_hidden = agent_hidden,
                        .agent_hidden2 = agent_hidden2,
                        .mixer_embed = mixer_embed,
                        .mixer = mixer};
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument(what);
  };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (t_max == 0) fail("t_max must be positive");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (buffer_capacity < batch_size) fail("buffer_capacity must be >= batch_size");
  if (target_period == 0) fail("target_period must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 &&
        epsilon.end <= 1.0)) {
    fail("epsilon endpoints must lie in [0, 1]");
  }
  if (epsilon.anneal_steps < 0.0) fail("epsilon anneal steps must be >= 0");
  ratio_schedule().validate();
  if (alpha < 0.0) fail("alpha must be >= 0");
  if (!(priority_eps > 0.0)) fail("priority_eps must be positive");
  if (!(beta_start >= 0.0 && beta_start <= 1.0 && beta_end >= 0.0 &&
        beta_end <= 1.0)) {
    fail("beta endpoints must lie in [0, 1]");
  }
  if (agent_hidden == 0 || agent_hidden2 == 0 || mixer_embed == 0) {
    fail("hidden widths must be positive");
  }
  if (eval_interval == 0) fail("eval_interval must be >= 1");
  if (eval_episodes == 0) fail("eval_episodes must be >= 1");
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(OptimizerKind kind, double lr, double beta1, double beta2,
                     double eps)
    : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Optimizer::step(ParamSet& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("optimizer: gradient count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i])) {
      throw diff::ShapeError("optimizer: gradient shape mismatch for " +
                             params.name(i));
    }
  }
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * grads[i][k];
    }
    return;
  }
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].rows(), params[i].cols());
      v_.emplace_back(params[i].rows(), params[i].cols());
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// LossGraphs

LossGraphs::LossGraphs(qnets::NetDims dims, diff::EvalOptions options)
    : dims_(dims), options_(options) {
  dims_.validate();

  full_agent_ = qnets::declare_agent(full_);
  full_q_ = qnets::declare_joint_q(full_, full_agent_, dims_.n_agents);
  full_mixer_ = qnets::declare_mixer(full_, dims_.mixer);
  full_state_ = full_.constant("state");
  full_y_ = full_.constant("targets");
  full_w_ = full_.constant("weights");
  full_.probe(full_q_.q, "q");
  NodeId q_tot =
      qnets::mixer_forward(full_, full_mixer_, full_q_.q, full_state_);
  full_loss_ = full_.sum(
      full_.mul(full_.squared_error(q_tot, full_y_), full_w_), SumAxis::kAll);

  det_mixer_ = qnets::declare_mixer(detached_, dims_.mixer);
  det_q_ = detached_.constant("q");
  det_state_ = detached_.constant("state");
  det_y_ = detached_.constant("targets");
  det_w_ = detached_.constant("weights");
  NodeId det_tot =
      qnets::mixer_forward(detached_, det_mixer_, det_q_, det_state_);
  det_loss_ = detached_.sum(
      detached_.mul(detached_.squared_error(det_tot, det_y_), det_w_),
      SumAxis::kAll);

  single_agent_ = qnets::declare_agent(single_);
  single_x_ = single_.constant("inputs");
  single_mask_ = single_.constant("masks");
  single_y_ = single_.constant("targets");
  single_w_ = single_.constant("weights");
  NodeId values = qnets::agent_forward(single_, single_agent_, single_x_);
  NodeId chosen =
      single_.sum(single_.mul(values, single_mask_), SumAxis::kRows);
  single_loss_ = single_.sum(
      single_.mul(single_.squared_error(chosen, single_y_), single_w_),
      SumAxis::kAll);
}

namespace {

std::vector<Tensor> collect(const diff::GradientReport& report,
                            std::span<const NodeId> leaves) {
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (NodeId id : leaves) out.push_back(report.parameter(id));
  return out;
}

std::vector<Tensor> zeros_like(const ParamSet& set) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.emplace_back(set[i].rows(), set[i].cols());
  }
  return out;
}

}  // namespace

LossResult LossGraphs::joint(const ParamSet& agent, const ParamSet& mixer,
                             std::span<const Tensor> inputs,
                             std::span<const Tensor> masks,
                             const Tensor& state, const Tensor& targets,
                             const Tensor& weights, bool detach_agents) const {
  LossResult result;
  if (detach_agents) {
    qnets::QNetworks nets(dims_, options_);
    Tensor q = nets.chosen_values(agent, inputs, masks);
    Bindings b;
    qnets::bind_mixer(b, det_mixer_, mixer, dims_);
    b.bind(det_q_, std::move(q));
    b.bind(det_state_, state);
    b.bind(det_y_, targets);
    b.bind(det_w_, weights);
    const diff::Values values = diff::forward(detached_, b, options_);
    const diff::GradientReport report =
        diff::backward(detached_, values, det_loss_);
    result.value = values[det_loss_].item();
    result.agent_grads = zeros_like(agent);
    result.mixer_grads = collect(report, det_mixer_.params);
    return result;
  }
  Bindings b;
  qnets::bind_agent(b, full_agent_, agent);
  qnets::bind_joint_q(b, full_q_, inputs, masks, dims_.n_agents);
  qnets::bind_mixer(b, full_mixer_, mixer, dims_);
  b.bind(full_state_, state);
  b.bind(full_y_, targets);
  b.bind(full_w_, weights);
  const diff::Values values = diff::forward(full_, b, options_);
  const diff::GradientReport report = diff::backward(full_, values, full_loss_);
  result.value = values[full_loss_].item();
  result.agent_grads = collect(report, full_agent_.params);
  result.mixer_grads = collect(report, full_mixer_.params);
  return result;
}

LossResult LossGraphs::individual(const ParamSet& agent, const Tensor& inputs,
                                  const Tensor& masks, const Tensor& targets,
                                  const Tensor& weights) const {
  Bindings b;
  qnets::bind_agent(b, single_agent_, agent);
  b.bind(single_x_, inputs);
  b.bind(single_mask_, masks);
  b.bind(single_y_, targets);
  b.bind(single_w_, weights);
  const diff::Values values = diff::forward(single_, b, options_);
  const diff::GradientReport report =
      diff::backward(single_, values, single_loss_);
  LossResult result;
  result.value = values[single_loss_].item();
  result.agent_grads = collect(report, single_agent_.params);
  return result;
}

// ---------------------------------------------------------------------------
// Losses

Tensor joint_targets(const replay::JointBatch& batch,
                     const qnets::GreedyTarget& target, double gamma) {
  Tensor y(batch.rows, 1);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const double boot = batch.team_done[r] != 0.0 ? 0.0 : target.q_tot[r];
    y[r] = batch.reward[r] + gamma * boot;
  }
  return y;
}

LossResult mixer_loss(const replay::JointBatch& batch,
                      const qnets::QNetworks& nets, const LossGraphs& losses,
                      const ParamStore& params, double gamma,
                      bool detach_agents) {
  if (batch.rows == 0) throw std::invalid_argument("mixer_loss: empty batch");
  const qnets::GreedyTarget target =
      nets.greedy_target(params.target_agent, params.target_mixer,
                         batch.next_inputs, batch.next_state, &batch.done);
  const Tensor y = joint_targets(batch, target, gamma);
  const Tensor w(batch.rows, 1, 1.0 / static_cast<double>(batch.rows));
  return losses.joint(params.agent, params.mixer, batch.inputs, batch.masks,
                      batch.state, y, w, detach_agents);
}

LossResult individual_loss(
    std::span<const replay::SingleAgentTransition> candidates,
    std::span<const replay::PrioritizedSample> selected,
    const LossGraphs& losses, const ParamSet& agent, double gamma, bool mean) {
  if (selected.empty()) {
    throw std::invalid_argument("individual_loss: empty selection");
  }
  const qnets::NetDims& dims = losses.dims();
  const std::size_t k = selected.size();
  Tensor x(k, dims.agent_input_width());
  Tensor mask(k, dims.n_actions);
  Tensor y(k, 1);
  Tensor w(k, 1);
  const double scale = mean ? 1.0 / static_cast<double>(k) : 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    const replay::SingleAgentTransition& c = candidates[selected[j].index];
    if (c.input.size() != dims.agent_input_width()) {
      throw diff::ShapeError("individual_loss: input width mismatch");
    }
    std::copy(c.input.begin(), c.input.end(), x.row_span(j).begin());
    mask(j, static_cast<std::size_t>(c.action)) = 1.0;
    y[j] = c.reward + gamma * c.target_value;
    w[j] = selected[j].weight * scale;
  }
  return losses.individual(agent, x, mask, y, w);
}

// ---------------------------------------------------------------------------
// Rollouts

replay::Episode run_episode(envs::Env& env, const qnets::QNetworks& nets,
                            const ParamSet& agent, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("epsilon outside [0, 1]");
  }
  const qnets::NetDims& dims = nets.dims();
  const std::size_t n = dims.n_agents;
  const std::size_t limit = env.spec().episode_limit;

  envs::ResetResult start = env.reset(rng);
  std::vector<std::vector<double>> obs = std::move(start.obs);
  std::vector<double> state = std::move(start.state);
  std::vector<int> last(n, -1);
  Tensor inputs(n, dims.agent_input_width());

  replay::Episode episode;
  for (std::size_t t = 0; t < limit; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      qnets::write_agent_input(inputs.row_span(i), obs[i], last[i], i, dims);
    }
    const Tensor q = nets.agent_values(agent, inputs);
    std::vector<int> actions(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (epsilon > 0.0 && uniform01(rng) < epsilon) {
        actions[i] = static_cast<int>(uniform_index(rng, dims.n_actions));
      } else {
        actions[i] = static_cast<int>(qnets::greedy_action(q.row_span(i)));
      }
    }
    envs::StepResult step = env.step(actions);
    replay::JointTransition tr;
    tr.obs = obs;
    tr.actions = actions;
    tr.state = state;
    tr.reward = step.team_reward;
    tr.next_obs = step.obs;
    tr.next_state = step.state;
    tr.done = step.done;
    tr.team_done = step.team_done;
    tr.t = t;
    episode.steps.push_back(std::move(tr));

    obs = std::move(step.obs);
    state = std::move(step.state);
    last = actions;
    if (step.episode_over()) {
      episode.terminal = step.team_done;
      break;
    }
  }
  return episode;
}

double evaluate(const qnets::QNetworks& nets, const ParamSet& agent,
                const envs::Env& env, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("evaluate: zero episodes");
  std::unique_ptr<envs::Env> copy = env.clone();
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const replay::Episode ep = run_episode(*copy, nets, agent, 0.0, rng);
    for (const auto& tr : ep.steps) total += tr.reward;
  }
  return total / static_cast<double>(episodes);
}

bool update_targets(ParamStore& params, std::size_t period, std::size_t t_prev,
                    std::size_t t_now) {
  if (period == 0) throw std::invalid_argument("target period is 0");
  if (t_now / period > t_prev / period || period == 1) {
    qnets::sync_targets(params);
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {
constexpr std::uint64_t kRolloutStream = 1;
constexpr std::uint64_t kSampleStream = 2;
constexpr std::uint64_t kEvalStream = 1000;
}  // namespace

Trainer::Trainer(TrainConfig config, std::unique_ptr<envs::Env> env,
                 std::uint64_t seed)
    : config_((config.validate(), config)),
      env_(std::move(env)),
      seed_(seed),
      nets_(config_.net_dims(env_->spec()), {.checked = config_.checked}),
      losses_(nets_.dims(), {.checked = config_.checked}),
      params_(qnets::init_params(seed, nets_.dims())),
      buffer_(config_.buffer_capacity),
      rollout_rng_(derive_rng(seed, kRolloutStream)),
      sample_rng_(derive_rng(seed, kSampleStream)),
      agent_opt_(config_.optimizer, config_.lr),
      mixer_opt_(config_.optimizer, config_.lr) {}

double Trainer::epsilon() const {
  return config_.epsilon.at(static_cast<double>(t_step_));
}

const replay::Episode& Trainer::collect_episode() {
  replay::Episode ep =
      run_episode(*env_, nets_, params_.agent, epsilon(), rollout_rng_);
  t_step_ += ep.steps.size();
  buffer_.push_episode(std::move(ep));
  return buffer_[buffer_.size() - 1];
}

UpdateMetrics Trainer::train_step() {
  const TrainConfig& c = config_;
  const std::vector<const replay::Episode*> episodes =
      replay::sample_joint_minibatch(buffer_, c.batch_size, sample_rng_);
  const replay::JointBatch batch =
      replay::make_joint_batch(episodes, nets_.dims());
  const double t = static_cast<double>(t_step_);

  UpdateMetrics m;
  m.epsilon = epsilon();

  const qnets::GreedyTarget target =
      nets_.greedy_target(params_.target_agent, params_.target_mixer,
                          batch.next_inputs, batch.next_state, &batch.done);
  const Tensor y = joint_targets(batch, target, c.gamma);
  const Tensor w(batch.rows, 1, 1.0 / static_cast<double>(batch.rows));

  if (c.mode == DivideMode::kJointBaseline) {
    const LossResult joint =
        losses_.joint(params_.agent, params_.mixer, batch.inputs, batch.masks,
                      batch.state, y, w, /*detach_agents=*/false);
    const Tensor q = nets_.chosen_values(params_.agent, batch.inputs,
                                         batch.masks);
    const Tensor q_tot = nets_.mix_values(params_.mixer, q, batch.state);
    double abs_delta = 0.0;
    for (std::size_t r = 0; r < batch.rows; ++r) {
      abs_delta += std::fabs(y[r] - q_tot[r]);
    }
    agent_opt_.step(params_.agent, joint.agent_grads);
    if (!params_.mixer.empty()) mixer_opt_.step(params_.mixer, joint.mixer_grads);
    m.loss_tot = joint.value;
    m.mean_abs_delta = abs_delta / static_cast<double>(batch.rows);
  } else {
    const LossResult joint = losses_.joint(
        params_.agent, params_.mixer, batch.inputs, batch.masks, batch.state,
        y, w, /*detach_agents=*/!c.mixer_grad_to_agents);
    if (!params_.mixer.empty()) mixer_opt_.step(params_.mixer, joint.mixer_grads);
    if (c.mixer_grad_to_agents) agent_opt_.step(params_.agent, joint.agent_grads);
    m.loss_tot = joint.value;

    const replay::Division division =
        replay::divide(batch, nets_, params_, c.gamma, target);
    const auto& cands = division.transitions;
    std::vector<double> td(cands.size());
    double abs_delta = 0.0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      td[j] = cands[j].td_error;
      abs_delta += std::fabs(td[j]);
    }
    m.mean_abs_delta = abs_delta / static_cast<double>(cands.size());

    std::vector<replay::PrioritizedSample> selected;
    if (c.mode == DivideMode::kDivideOnly) {
      selected.resize(cands.size());
      for (std::size_t j = 0; j < cands.size(); ++j) {
        selected[j] = {j, 1.0 / static_cast<double>(cands.size()), 1.0};
      }
      m.eta = 1.0;
    } else {
      const std::vector<double> probs =
          replay::priority_probs(td, c.alpha, c.priority_eps);
      m.eta = replay::sample_ratio(t, c.ratio_schedule());
      selected = replay::select(cands.size(), m.eta, probs, c.beta_at(t),
                                sample_rng_);
    }
    m.selected = selected.size();
    const LossResult ind =
        individual_loss(cands, selected, losses_, params_.agent, c.gamma,
                        c.mean_individual_loss);
    agent_opt_.step(params_.agent, ind.agent_grads);
    m.loss_ind = ind.value;

    if (replay_dump_ != nullptr && c.replay_dump_every > 0 &&
        updates_ % c.replay_dump_every == 0) {
      replay::write_replay_records(*replay_dump_, cands, selected);
    }
  }
  ++updates_;
  return m;
}

double Trainer::evaluate_at(std::size_t index) const {
  Rng rng = derive_rng(seed_, kEvalStream + index);
  return evaluate(nets_, params_.agent, *env_, config_.eval_episodes, rng);
}

void Trainer::run(const std::function<void(const Metrics&)>& sink) {
  sink(Metrics{.t_step = 0, .eval_return = evaluate_at(0)});
  while (t_step_ < config_.t_max) {
    const std::size_t before = t_step_;
    collect_episode();
    Metrics row{.t_step = t_step_};
    if (buffer_.size() >= config_.batch_size) row.update = train_step();
    update_targets(params_, config_.target_period, before, t_step_);
    const std::size_t k = t_step_ / config_.eval_interval;
    if (k > before / config_.eval_interval) row.eval_return = evaluate_at(k);
    if (row.update || row.eval_return) sink(row);
  }
}

}  // namespace der::train
