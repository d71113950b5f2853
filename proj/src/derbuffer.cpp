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

#include "der/derbuffer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace der::replay {

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("buffer capacity is 0");
}

void ReplayBuffer::push_episode(Episode episode) {
  if (episode.steps.empty()) throw std::invalid_argument("empty episode");
  episode.id = inserted_++;
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<const Episode*> ReplayBuffer::sample(std::size_t batch,
                                                 Rng& rng) const {
  if (batch == 0 || batch > episodes_.size()) {
    throw std::length_error("insufficient episodes: need " +
                            std::to_string(batch) + ", have " +
                            std::to_string(episodes_.size()));
  }
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  std::vector<const Episode*> out;
  out.reserve(batch);
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t j = k + uniform_index(rng, idx.size() - k);
    std::swap(idx[k], idx[j]);
    out.push_back(&episodes_[idx[k]]);
  }
  return out;
}

std::vector<const Episode*> sample_joint_minibatch(const ReplayBuffer& buffer,
                                                   std::size_t batch,
                                                   Rng& rng) {
  return buffer.sample(batch, rng);
}

// ---------------------------------------------------------------------------
// Batching

JointBatch make_joint_batch(std::span<const Episode* const> episodes,
                            const qnets::NetDims& dims) {
  const std::size_t n = dims.n_agents;
  const std::size_t width = dims.agent_input_width();
  std::size_t rows = 0;
  for (const Episode* ep : episodes) rows += ep->steps.size();
  if (rows == 0) throw std::invalid_argument("empty joint batch");

  JointBatch b;
  b.rows = rows;
  b.state = Tensor(rows, dims.state_width);
  b.next_state = Tensor(rows, dims.state_width);
  b.reward = Tensor(rows, 1);
  b.team_done = Tensor(rows, 1);
  b.done = Tensor(rows, n);
  b.actions.resize(rows * n);
  for (std::size_t i = 0; i < n; ++i) {
    b.inputs.emplace_back(rows, width);
    b.next_inputs.emplace_back(rows, width);
    b.masks.emplace_back(rows, dims.n_actions);
  }

  std::size_t r = 0;
  for (const Episode* ep : episodes) {
    for (std::size_t t = 0; t < ep->steps.size(); ++t, ++r) {
      const JointTransition& tr = ep->steps[t];
      if (tr.obs.size() != n || tr.actions.size() != n ||
          tr.next_obs.size() != n || tr.done.size() != n) {
        throw std::invalid_argument("transition agent count mismatch");
      }
      if (tr.state.size() != dims.state_width ||
          tr.next_state.size() != dims.state_width) {
        throw diff::ShapeError("transition state width mismatch");
      }
      std::copy(tr.state.begin(), tr.state.end(), b.state.row_span(r).begin());
      std::copy(tr.next_state.begin(), tr.next_state.end(),
                b.next_state.row_span(r).begin());
      b.reward[r] = tr.reward;
      b.team_done[r] = tr.team_done ? 1.0 : 0.0;
      b.episode_id.push_back(ep->id);
      b.step.push_back(tr.t);
      for (std::size_t i = 0; i < n; ++i) {
        const int last = t == 0 ? -1 : ep->steps[t - 1].actions[i];
        qnets::write_agent_input(b.inputs[i].row_span(r), tr.obs[i], last, i,
                                 dims);
        qnets::write_agent_input(b.next_inputs[i].row_span(r), tr.next_obs[i],
                                 tr.actions[i], i, dims);
        const int a = tr.actions[i];
        if (a < 0 || static_cast<std::size_t>(a) >= dims.n_actions) {
          throw std::out_of_range("stored action out of range");
        }
        b.masks[i](r, static_cast<std::size_t>(a)) = 1.0;
        b.actions[r * n + i] = a;
        b.done(r, i) = tr.done[i] ? 1.0 : 0.0;
      }
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Division

double individual_reward(double team_reward, double gamma, double q_tot,
                         double target_q_tot, double grad, double q_i,
                         double target_q_i) {
  return (team_reward + gamma * target_q_tot - q_tot) * grad -
         gamma * target_q_i + q_i;
}

Division divide(const JointBatch& batch, const qnets::QNetworks& nets,
                const qnets::ParamStore& params, double gamma) {
  if (batch.next_inputs.size() != nets.dims().n_agents) {
    throw std::invalid_argument("divide: agent count mismatch");
  }
  return divide(batch, nets, params, gamma,
                nets.greedy_target(params.target_agent, params.target_mixer,
                                   batch.next_inputs, batch.next_state,
                                   &batch.done));
}

Division divide(const JointBatch& batch, const qnets::QNetworks& nets,
                const qnets::ParamStore& params, double gamma,
                const qnets::GreedyTarget& target) {
  const qnets::NetDims& dims = nets.dims();
  const std::size_t n = dims.n_agents;
  if (batch.inputs.size() != n || batch.done.cols() != n) {
    throw std::invalid_argument("divide: agent count mismatch");
  }
  const std::size_t rows = batch.rows;

  Division d;
  d.q_chosen = nets.chosen_values(params.agent, batch.inputs, batch.masks);
  qnets::MixResult online =
      nets.mix_with_grads(params.mixer, d.q_chosen, batch.state);
  d.q_tot = std::move(online.q_tot);
  d.grads = std::move(online.grads);

  d.target_q = target.per_agent;
  d.target_q_tot = target.q_tot;
  if (d.target_q.rows() != rows || d.target_q.cols() != n) {
    throw diff::ShapeError("divide: target shape mismatch");
  }
  d.joint_td = Tensor(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    if (batch.team_done[r] != 0.0) d.target_q_tot[r] = 0.0;
    d.joint_td[r] = batch.reward[r] + gamma * d.target_q_tot[r] - d.q_tot[r];
  }
  for (const Tensor* t : {&d.q_chosen, &d.q_tot, &d.target_q, &d.target_q_tot}) {
    if (!t->all_finite()) throw diff::NonFiniteError("divide: non-finite Q");
  }

  d.transitions.reserve(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      SingleAgentTransition s;
      s.agent = i;
      const auto in = batch.inputs[i].row_span(r);
      s.input.assign(in.begin(), in.end());
      s.obs.assign(in.begin(),
                   in.begin() + static_cast<std::ptrdiff_t>(dims.obs_width));
      const auto next = batch.next_inputs[i].row_span(r);
      s.next_obs.assign(
          next.begin(),
          next.begin() + static_cast<std::ptrdiff_t>(dims.obs_width));
      s.action = batch.actions[r * n + i];
      s.done = batch.done(r, i) != 0.0;
      s.q_value = d.q_chosen(r, i);
      s.target_value = d.target_q(r, i);
      s.reward = individual_reward(batch.reward[r], gamma, d.q_tot[r],
                                   d.target_q_tot[r], d.grads(r, i),
                                   s.q_value, s.target_value);
      s.td_error = s.reward + gamma * s.target_value - s.q_value;
      s.episode_id = batch.episode_id[r];
      s.step = batch.step[r];
      d.transitions.push_back(std::move(s));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Prioritization

std::vector<double> priority_probs(std::span<const double> td_errors,
                                   double alpha, double eps_p) {
  if (td_errors.empty()) throw std::invalid_argument("priority_probs: empty");
  if (alpha < 0.0 || eps_p < 0.0) {
    throw std::invalid_argument("priority_probs: alpha and eps_p must be >= 0");
  }
  std::vector<double> p(td_errors.size());
  double total = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::pow(std::fabs(td_errors[j]) + eps_p, alpha);
    total += p[j];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("priority_probs: priorities sum to zero");
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> is_weights(std::span<const double> probs,
                               std::size_t count_candidates, double beta) {
  if (probs.empty() || count_candidates == 0) {
    throw std::invalid_argument("is_weights: empty input");
  }
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("is_weights: beta outside [0, 1]");
  }
  std::vector<double> w(probs.size());
  double max_w = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (!(probs[j] > 0.0)) throw std::invalid_argument("is_weights: zero probability");
    w[j] = std::pow(1.0 / (static_cast<double>(count_candidates) * probs[j]),
                    beta);
    max_w = std::max(max_w, w[j]);
  }
  for (double& v : w) v /= max_w;
  return w;
}

RatioSchedule RatioSchedule::fixed(double eta, double t_max) {
  return RatioSchedule{eta, eta, 1.0, t_max};
}

void RatioSchedule::validate() const {
  auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!unit(eta_start) || !unit(eta_end) || !unit(proportion)) {
    throw std::invalid_argument("ratio schedule values must lie in (0, 1]");
  }
  if (eta_start > eta_end) {
    throw std::invalid_argument("ratio schedule requires eta_start <= eta_end");
  }
  if (!(t_max > 0.0)) throw std::invalid_argument("ratio schedule t_max <= 0");
}

double sample_ratio(double t, const RatioSchedule& s) {
  if (t < 0.0) throw std::invalid_argument("sample_ratio: negative t");
  const double ramp = s.proportion * s.t_max;
  if (t >= ramp) return s.eta_end;
  return s.eta_start + (s.eta_end - s.eta_start) * (t / ramp);
}

std::size_t selection_count(std::size_t candidate_count, double eta) {
  if (!(eta > 0.0) || eta > 1.0) {
    throw std::invalid_argument("sample ratio outside (0, 1]");
  }
  return static_cast<std::size_t>(
      std::llround(eta * static_cast<double>(candidate_count)));
}

std::vector<PrioritizedSample> select(std::size_t candidate_count, double eta,
                                      std::span<const double> probs,
                                      double beta, Rng& rng) {
  if (probs.size() != candidate_count) {
    throw std::invalid_argument("select: probabilities do not match candidates");
  }
  const std::size_t k = selection_count(candidate_count, eta);
  if (k == 0) {
    throw std::invalid_argument("select: eta * #S rounds to zero");
  }

  std::vector<std::size_t> chosen(candidate_count);
  std::iota(chosen.begin(), chosen.end(), 0);
  if (k < candidate_count) {
    // Weighted sampling without replacement via exponential keys: the top-k
    // of log(u)/P has the law of k sequential proportional draws.
    std::vector<double> key(candidate_count);
    for (std::size_t j = 0; j < candidate_count; ++j) {
      double u = uniform01(rng);
      while (u <= 0.0) u = uniform01(rng);
      key[j] = probs[j] > 0.0 ? std::log(u) / probs[j]
                              : -std::numeric_limits<double>::infinity();
    }
    std::partial_sort(chosen.begin(),
                      chosen.begin() + static_cast<std::ptrdiff_t>(k),
                      chosen.end(), [&](std::size_t a, std::size_t b) {
                        if (key[a] != key[b]) return key[a] > key[b];
                        return a < b;
                      });
    chosen.resize(k);
  }

  std::vector<double> p(k);
  for (std::size_t j = 0; j < k; ++j) p[j] = probs[chosen[j]];
  const std::vector<double> w = is_weights(p, candidate_count, beta);
  std::vector<PrioritizedSample> out(k);
  for (std::size_t j = 0; j < k; ++j) out[j] = {chosen[j], p[j], w[j]};
  return out;
}

// ---------------------------------------------------------------------------
// Dump

void write_replay_header(std::ostream& out) {
  out << "episode_id,t,agent,r_i,delta,P,omega\n";
}

void write_replay_records(std::ostream& out,
                          std::span<const SingleAgentTransition> candidates,
                          std::span<const PrioritizedSample> selected) {
  char buf[32];
  auto num = [&](double v) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, end - buf);
  };
  for (const PrioritizedSample& s : selected) {
    const SingleAgentTransition& c = candidates[s.index];
    out << c.episode_id << ',' << c.step << ',' << c.agent << ',';
    num(c.reward);
    out << ',';
    num(c.td_error);
    out << ',';
    num(s.probability);
    out << ',';
    num(s.weight);
    out << '\n';
  }
}

}  // namespace der::replay
