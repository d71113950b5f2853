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

// Episodic replay, division of joint transitions into single-agent
// transitions with gradient-equivalent individual rewards, and in-batch
// prioritized selection of the divided set.

#ifndef DER_DERBUFFER_HPP_
#define DER_DERBUFFER_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include "der/diffcore.hpp"
#include "der/qnets.hpp"
#include "der/rng.hpp"

namespace der::replay {

using diff::Tensor;

struct JointTransition {
  std::vector<std::vector<double>> obs;
  std::vector<int> actions;
  std::vector<double> state;
  double reward = 0.0;
  std::vector<std::vector<double>> next_obs;
  std::vector<double> next_state;
  std::vector<std::uint8_t> done;  // per agent, after this step
  bool team_done = false;          // terminal: no bootstrap
  std::size_t t = 0;
};

struct Episode {
  std::vector<JointTransition> steps;
  bool terminal = false;
  std::uint64_t id = 0;  // assigned by ReplayBuffer::push_episode
};

// FIFO ring of whole episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  // Throws std::invalid_argument on an empty episode. The stored copy gets
  // the next insertion id.
  void push_episode(Episode episode);

  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const Episode& operator[](std::size_t i) const { return episodes_.at(i); }

  // Uniform without replacement. Pointers stay valid until the next push.
  // Throws std::length_error when fewer than `batch` episodes are stored.
  std::vector<const Episode*> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::uint64_t inserted_ = 0;
  std::deque<Episode> episodes_;
};

std::vector<const Episode*> sample_joint_minibatch(const ReplayBuffer& buffer,
                                                   std::size_t batch,
                                                   Rng& rng);

// A mini-batch of episodes flattened to rows of joint transitions. Only real
// steps become rows; episodes are never padded.
struct JointBatch {
  std::size_t rows = 0;
  std::vector<Tensor> inputs;       // per agent: (o_t, a_{t-1}, id)
  std::vector<Tensor> next_inputs;  // per agent: (o_{t+1}, a_t, id)
  std::vector<Tensor> masks;        // per agent: one-hot a_t
  std::vector<int> actions;         // rows x n_agents, row-major
  Tensor state;
  Tensor next_state;
  Tensor reward;     // rows x 1
  Tensor team_done;  // rows x 1, 0/1
  Tensor done;       // rows x n_agents, 0/1
  std::vector<std::uint64_t> episode_id;
  std::vector<std::size_t> step;
};

JointBatch make_joint_batch(std::span<const Episode* const> episodes,
                            const qnets::NetDims& dims);

struct SingleAgentTransition {
  std::size_t agent = 0;
  std::vector<double> obs;
  int action = 0;
  double reward = 0.0;  // individual reward, detached
  std::vector<double> next_obs;
  bool done = false;
  double td_error = 0.0;  // r_i + gamma * Q~_i - Q_i
  std::uint64_t episode_id = 0;
  std::size_t step = 0;

  // Detached quantities used to rebuild the individual loss.
  std::vector<double> input;  // agent network input at t
  double q_value = 0.0;       // Q_i(o_i, a_i) at division time
  double target_value = 0.0;  // Q~_i, zero when done
};

// r_i = (R + gamma*Q~_tot - Q_tot) * g_i - gamma*Q~_i + Q_i
double individual_reward(double team_reward, double gamma, double q_tot,
                         double target_q_tot, double grad, double q_i,
                         double target_q_i);

struct Division {
  std::vector<SingleAgentTransition> transitions;  // row-major (row, agent)
  Tensor q_tot;         // rows x 1
  Tensor target_q_tot;  // rows x 1, zero at terminal rows
  Tensor joint_td;      // rows x 1, R + gamma*Q~_tot - Q_tot
  Tensor grads;         // rows x n_agents, dQ_tot/dQ_i
  Tensor q_chosen;      // rows x n_agents
  Tensor target_q;      // rows x n_agents
};

// Throws std::invalid_argument on an agent-count mismatch and
// diff::NonFiniteError when any Q-value is not finite.
Division divide(const JointBatch& batch, const qnets::QNetworks& nets,
                const qnets::ParamStore& params, double gamma);
// Same, reusing greedy targets already computed from params' target copies.
Division divide(const JointBatch& batch, const qnets::QNetworks& nets,
                const qnets::ParamStore& params, double gamma,
                const qnets::GreedyTarget& target);

// P_j = p_j^alpha / sum_k p_k^alpha with p_j = |delta_j| + eps_p.
std::vector<double> priority_probs(std::span<const double> td_errors,
                                   double alpha, double eps_p);

// w_j = (1/(count * P_j))^beta / max_k w_k over the given probabilities.
std::vector<double> is_weights(std::span<const double> probs,
                               std::size_t count_candidates, double beta);

struct RatioSchedule {
  double eta_start = 0.8;
  double eta_end = 1.0;
  double proportion = 0.6;
  double t_max = 1.0;

  static RatioSchedule fixed(double eta, double t_max);
  // Throws std::invalid_argument when the invariants do not hold.
  void validate() const;

  friend bool operator==(const RatioSchedule&, const RatioSchedule&) = default;
};

// Linear from eta_start to eta_end over the first proportion*t_max steps,
// then eta_end. Throws std::invalid_argument for negative t.
double sample_ratio(double t, const RatioSchedule& schedule);

struct PrioritizedSample {
  std::size_t index = 0;  // into the candidate set
  double probability = 0.0;
  double weight = 1.0;
};

// round(eta * #S) candidates drawn without replacement, proportional to
// `probs`. Weights use count_candidates = #S and are normalized over the
// selected batch. Throws std::invalid_argument when the count rounds to 0.
std::vector<PrioritizedSample> select(std::size_t candidate_count, double eta,
                                      std::span<const double> probs,
                                      double beta, Rng& rng);

std::size_t selection_count(std::size_t candidate_count, double eta);

// Newline-delimited dump, columns:
//   episode_id,t,agent,r_i,delta,P,omega
void write_replay_header(std::ostream& out);
void write_replay_records(std::ostream& out,
                          std::span<const SingleAgentTransition> candidates,
                          std::span<const PrioritizedSample> selected);

}  // namespace der::replay

#endif  // DER_DERBUFFER_HPP_
