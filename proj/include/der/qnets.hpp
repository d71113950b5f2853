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

// Parameter-shared agent network and the two mixers (VDN sum and the
// state-conditioned monotonic hypernetwork mixer), expressed as diffcore
// graphs.

#ifndef DER_QNETS_HPP_
#define DER_QNETS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "der/diffcore.hpp"

namespace der::qnets {

using diff::Tensor;

enum class MixerKind { kVdn, kMonotonic };

std::string_view to_string(MixerKind kind);
std::optional<MixerKind> parse_mixer_kind(std::string_view text);

struct NetDims {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t obs_width = 0;
  std::size_t state_width = 0;
  std::size_t agent_hidden = 64;
  std::size_t agent_hidden2 = 64;
  std::size_t mixer_embed = 32;
  MixerKind mixer = MixerKind::kMonotonic;

  // observation + last-action one-hot + agent-id one-hot
  std::size_t agent_input_width() const {
    return obs_width + n_actions + n_agents;
  }
  // Throws std::invalid_argument on any zero width.
  void validate() const;

  friend bool operator==(const NetDims&, const NetDims&) = default;
};

// Ordered named tensors.
class ParamSet {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;

  std::size_t scalar_count() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// Online and target copies of the shared agent network and the mixer.
struct ParamStore {
  ParamSet agent;
  ParamSet mixer;
  ParamSet target_agent;
  ParamSet target_mixer;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
// Target copies equal the online copies.
ParamStore init_params(std::uint64_t seed, const NetDims& dims);

// Hard copy target <- online.
void sync_targets(ParamStore& params);

// Lowest index wins ties.
std::size_t greedy_action(std::span<const double> q);

// Writes (obs, one-hot(last_action), one-hot(agent)) into `out`. A negative
// last_action encodes "no previous action" and leaves that block zero.
void write_agent_input(std::span<double> out, std::span<const double> obs,
                       int last_action, std::size_t agent,
                       const NetDims& dims);
std::vector<double> agent_input(std::span<const double> obs, int last_action,
                                std::size_t agent, const NetDims& dims);

// --- graph building blocks -------------------------------------------------

struct AgentNetNodes {
  std::vector<diff::NodeId> params;
};

AgentNetNodes declare_agent(diff::Graph& graph);
// inputs: rows x input_width  ->  rows x n_actions
diff::NodeId agent_forward(diff::Graph& graph, const AgentNetNodes& net,
                           diff::NodeId inputs);
void bind_agent(diff::Bindings& bindings, const AgentNetNodes& net,
                const ParamSet& agent);

struct MixerNodes {
  MixerKind kind = MixerKind::kVdn;
  std::vector<diff::NodeId> params;
  // Constant 0/1 matrices that replicate each q_i across the embedding and
  // then sum the per-agent products back down.
  diff::NodeId expand{};
  diff::NodeId collapse{};
};

MixerNodes declare_mixer(diff::Graph& graph, MixerKind kind);
// q: rows x n_agents, state: rows x state_width  ->  rows x 1
diff::NodeId mixer_forward(diff::Graph& graph, const MixerNodes& mixer,
                           diff::NodeId q, diff::NodeId state);
void bind_mixer(diff::Bindings& bindings, const MixerNodes& mixer,
                const ParamSet& params, const NetDims& dims);

// Per-agent chosen values gathered into a rows x n_agents matrix. The agent
// network is applied once per agent with the same parameter leaves.
struct JointQNodes {
  std::vector<diff::NodeId> inputs;   // n_agents of rows x input_width
  std::vector<diff::NodeId> masks;    // n_agents of rows x n_actions one-hot
  std::vector<diff::NodeId> basis;    // n_agents of 1 x n_agents unit rows
  std::vector<diff::NodeId> chosen;   // n_agents of rows x 1
  diff::NodeId q{};                   // rows x n_agents
};

JointQNodes declare_joint_q(diff::Graph& graph, const AgentNetNodes& net,
                            std::size_t n_agents);
void bind_joint_q(diff::Bindings& bindings, const JointQNodes& nodes,
                  std::span<const Tensor> inputs,
                  std::span<const Tensor> masks, std::size_t n_agents);

// One-hot rows for a column of actions.
Tensor action_mask(std::span<const int> actions, std::size_t n_actions);

// --- batched evaluation ----------------------------------------------------

struct MixResult {
  Tensor q_tot;  // rows x 1
  Tensor grads;  // rows x n_agents, dQ_tot/dq_i per row
};

struct GreedyTarget {
  Tensor per_agent;          // rows x n_agents, max_a Q_i (zero where done)
  Tensor q_tot;              // rows x 1, target mixer on per_agent
  std::vector<int> actions;  // rows * n_agents, row-major greedy actions
};

// Holds prebuilt graphs for one NetDims. Graphs are immutable after
// construction, so a QNetworks can be shared across threads.
class QNetworks {
 public:
  explicit QNetworks(NetDims dims, diff::EvalOptions options = {});

  const NetDims& dims() const { return dims_; }
  diff::EvalOptions options() const { return options_; }

  // rows x input_width -> rows x n_actions
  Tensor agent_values(const ParamSet& agent, const Tensor& inputs) const;

  // q: rows x n_agents -> rows x 1
  Tensor mix_values(const ParamSet& mixer, const Tensor& q,
                    const Tensor& state) const;

  MixResult mix_with_grads(const ParamSet& mixer, const Tensor& q,
                           const Tensor& state) const;

  // rows x n_agents of Q_i(o_i, a_i).
  Tensor chosen_values(const ParamSet& agent, std::span<const Tensor> inputs,
                       std::span<const Tensor> masks) const;

  // Per-agent greedy maxima under the given (target) parameters, fed to the
  // given (target) mixer. `done` is an optional rows x n_agents 0/1 matrix;
  // done agents contribute a zero value.
  GreedyTarget greedy_target(const ParamSet& agent, const ParamSet& mixer,
                             std::span<const Tensor> next_inputs,
                             const Tensor& next_state,
                             const Tensor* done = nullptr) const;

 private:
  NetDims dims_;
  diff::EvalOptions options_;

  diff::Graph agent_graph_;
  AgentNetNodes agent_net_;
  diff::NodeId agent_in_{};
  diff::NodeId agent_out_{};

  diff::Graph mix_graph_;
  MixerNodes mix_nodes_;
  diff::NodeId mix_q_{};
  diff::NodeId mix_state_{};
  diff::NodeId mix_out_{};
  diff::NodeId mix_sum_{};
  diff::ProbeId mix_probe_{};

  diff::Graph joint_graph_;
  AgentNetNodes joint_net_;
  JointQNodes joint_q_;
};

// --- single-sample operations ----------------------------------------------

// Q-values of one agent for every action.
std::vector<double> agent_q(const ParamSet& agent, const NetDims& dims,
                            std::span<const double> obs,
                            std::span<const double> last_action_onehot,
                            std::span<const double> agent_id_onehot);

struct QEval {
  double q_tot = 0.0;
  std::vector<double> q_chosen;
  std::vector<double> grads_g;  // dQ_tot/dQ_i
};

QEval mix(const ParamSet& mixer, const NetDims& dims,
          std::span<const double> q_chosen, std::span<const double> state);

// Value of the target mixer at the per-agent greedy actions.
// next_last_actions are the actions taken at the current step.
double greedy_joint_target(const ParamSet& target_agent,
                           const ParamSet& target_mixer, const NetDims& dims,
                           std::span<const std::vector<double>> next_obs,
                           std::span<const int> next_last_actions,
                           std::span<const double> next_state);

// --- checkpoints -------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const NetDims& dims,
                     const ParamStore& params);

struct Checkpoint {
  NetDims dims;
  ParamStore params;
};

// Throws std::runtime_error on malformed or version-mismatched files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace der::qnets

#endif  // DER_QNETS_HPP_
