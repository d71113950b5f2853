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

#include "der/qnets.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace der::qnets {

using diff::Bindings;
using diff::Graph;
using diff::NodeId;
using diff::SumAxis;

std::string_view to_string(MixerKind kind) {
  return kind == MixerKind::kVdn ? "vdn" : "monotonic";
}

std::optional<MixerKind> parse_mixer_kind(std::string_view text) {
  if (text == "vdn") return MixerKind::kVdn;
  if (text == "monotonic" || text == "qmix") return MixerKind::kMonotonic;
  return std::nullopt;
}

void NetDims::validate() const {
  auto require = [](std::size_t v, const char* what) {
    if (v == 0) {
      throw std::invalid_argument(std::string("zero-width layer: ") + what);
    }
  };
  require(n_agents, "n_agents");
  require(n_actions, "n_actions");
  require(obs_width, "obs_width");
  require(state_width, "state_width");
  require(agent_hidden, "agent_hidden");
  require(agent_hidden2, "agent_hidden2");
  if (mixer == MixerKind::kMonotonic) require(mixer_embed, "mixer_embed");
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const Tensor& t : tensors_) {
    flat.insert(flat.end(), t.data().begin(), t.data().end());
  }
  return flat;
}

void ParamSet::assign_flat(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw std::invalid_argument("flat parameter length mismatch");
  }
  std::size_t off = 0;
  for (Tensor& t : tensors_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t.size(),
                t.data().begin());
    off += t.size();
  }
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void add_linear(ParamSet& set, const std::string& name, std::size_t fan_in,
                std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  set.add(name, uniform_tensor(fan_in, fan_out, bound, rng));
  set.add(name + "_b", uniform_tensor(1, fan_out, bound, rng));
}

}  // namespace

ParamStore init_params(std::uint64_t seed, const NetDims& dims) {
  dims.validate();
  std::mt19937_64 rng(seed);
  ParamStore store;
  add_linear(store.agent, "agent/fc1", dims.agent_input_width(),
             dims.agent_hidden, rng);
  add_linear(store.agent, "agent/fc2", dims.agent_hidden, dims.agent_hidden2,
             rng);
  add_linear(store.agent, "agent/out", dims.agent_hidden2, dims.n_actions,
             rng);
  if (dims.mixer == MixerKind::kMonotonic) {
    const std::size_t s = dims.state_width;
    const std::size_t h = dims.mixer_embed;
    add_linear(store.mixer, "mixer/hyper_w1", s, dims.n_agents * h, rng);
    add_linear(store.mixer, "mixer/hyper_b1", s, h, rng);
    add_linear(store.mixer, "mixer/hyper_w2", s, h, rng);
    add_linear(store.mixer, "mixer/v1", s, h, rng);
    add_linear(store.mixer, "mixer/v2", h, 1, rng);
  }
  sync_targets(store);
  return store;
}

void sync_targets(ParamStore& params) {
  params.target_agent = params.agent;
  params.target_mixer = params.mixer;
}

std::size_t greedy_action(std::span<const double> q) {
  if (q.empty()) throw std::invalid_argument("greedy_action on empty vector");
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

void write_agent_input(std::span<double> out, std::span<const double> obs,
                       int last_action, std::size_t agent,
                       const NetDims& dims) {
  if (out.size() != dims.agent_input_width() || obs.size() != dims.obs_width) {
    throw diff::ShapeError("agent input width mismatch");
  }
  if (agent >= dims.n_agents) throw std::out_of_range("agent index");
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(obs.begin(), obs.end(), out.begin());
  if (last_action >= 0) {
    if (static_cast<std::size_t>(last_action) >= dims.n_actions) {
      throw std::out_of_range("last action index");
    }
    out[dims.obs_width + static_cast<std::size_t>(last_action)] = 1.0;
  }
  out[dims.obs_width + dims.n_actions + agent] = 1.0;
}

std::vector<double> agent_input(std::span<const double> obs, int last_action,
                                std::size_t agent, const NetDims& dims) {
  std::vector<double> out(dims.agent_input_width());
  write_agent_input(out, obs, last_action, agent, dims);
  return out;
}

// ---------------------------------------------------------------------------
// Graph building blocks

AgentNetNodes declare_agent(Graph& graph) {
  AgentNetNodes net;
  for (const char* name : {"agent/fc1", "agent/fc1_b", "agent/fc2",
                           "agent/fc2_b", "agent/out", "agent/out_b"}) {
    net.params.push_back(graph.parameter(name));
  }
  return net;
}

NodeId agent_forward(Graph& graph, const AgentNetNodes& net, NodeId inputs) {
  const auto& p = net.params;
  NodeId h1 = graph.relu(graph.add(graph.matmul(inputs, p[0]), p[1]));
  NodeId h2 = graph.relu(graph.add(graph.matmul(h1, p[2]), p[3]));
  return graph.add(graph.matmul(h2, p[4]), p[5]);
}

void bind_agent(Bindings& bindings, const AgentNetNodes& net,
                const ParamSet& agent) {
  if (agent.size() != net.params.size()) {
    throw std::invalid_argument("agent parameter set has wrong arity");
  }
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    bindings.bind(net.params[i], agent[i]);
  }
}

MixerNodes declare_mixer(Graph& graph, MixerKind kind) {
  MixerNodes mixer;
  mixer.kind = kind;
  if (kind == MixerKind::kMonotonic) {
    for (const char* name :
         {"mixer/hyper_w1", "mixer/hyper_w1_b", "mixer/hyper_b1",
          "mixer/hyper_b1_b", "mixer/hyper_w2", "mixer/hyper_w2_b",
          "mixer/v1", "mixer/v1_b", "mixer/v2", "mixer/v2_b"}) {
      mixer.params.push_back(graph.parameter(name));
    }
    mixer.expand = graph.constant("mixer/expand");
    mixer.collapse = graph.constant("mixer/collapse");
  }
  return mixer;
}

NodeId mixer_forward(Graph& graph, const MixerNodes& mixer, NodeId q,
                     NodeId state) {
  if (mixer.kind == MixerKind::kVdn) return graph.sum(q, SumAxis::kRows);

  const auto& p = mixer.params;
  auto linear = [&](NodeId x, std::size_t w) {
    return graph.add(graph.matmul(x, p[w]), p[w + 1]);
  };
  // Mixing weights pass through abs so dQ_tot/dq_i >= 0.
  NodeId w1 = graph.abs(linear(state, 0));                  // rows x N*H
  NodeId b1 = linear(state, 2);                             // rows x H
  NodeId q_rep = graph.matmul(q, mixer.expand);             // rows x N*H
  NodeId pre = graph.matmul(graph.mul(q_rep, w1), mixer.collapse);
  NodeId hidden = graph.elu(graph.add(pre, b1));            // rows x H
  NodeId w2 = graph.abs(linear(state, 4));                  // rows x H
  NodeId v = linear(graph.relu(linear(state, 6)), 8);       // rows x 1
  return graph.add(graph.sum(graph.mul(hidden, w2), SumAxis::kRows), v);
}

void bind_mixer(Bindings& bindings, const MixerNodes& mixer,
                const ParamSet& params, const NetDims& dims) {
  if (params.size() != mixer.params.size()) {
    throw std::invalid_argument("mixer parameter set has wrong arity");
  }
  for (std::size_t i = 0; i < mixer.params.size(); ++i) {
    bindings.bind(mixer.params[i], params[i]);
  }
  if (mixer.kind == MixerKind::kMonotonic) {
    const std::size_t n = dims.n_agents;
    const std::size_t h = dims.mixer_embed;
    Tensor expand(n, n * h);
    Tensor collapse(n * h, h);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < h; ++k) {
        expand(i, i * h + k) = 1.0;
        collapse(i * h + k, k) = 1.0;
      }
    }
    bindings.bind(mixer.expand, std::move(expand));
    bindings.bind(mixer.collapse, std::move(collapse));
  }
}

JointQNodes declare_joint_q(Graph& graph, const AgentNetNodes& net,
                            std::size_t n_agents) {
  JointQNodes nodes;
  for (std::size_t i = 0; i < n_agents; ++i) {
    const std::string tag = std::to_string(i);
    nodes.inputs.push_back(graph.constant("input/" + tag));
    nodes.masks.push_back(graph.constant("mask/" + tag));
    nodes.basis.push_back(graph.constant("basis/" + tag));
  }
  std::optional<NodeId> q;
  for (std::size_t i = 0; i < n_agents; ++i) {
    NodeId values = agent_forward(graph, net, nodes.inputs[i]);
    NodeId chosen =
        graph.sum(graph.mul(values, nodes.masks[i]), SumAxis::kRows);
    nodes.chosen.push_back(chosen);
    NodeId placed = graph.matmul(chosen, nodes.basis[i]);
    q = q ? graph.add(*q, placed) : placed;
  }
  nodes.q = *q;
  return nodes;
}

void bind_joint_q(Bindings& bindings, const JointQNodes& nodes,
                  std::span<const Tensor> inputs,
                  std::span<const Tensor> masks, std::size_t n_agents) {
  if (inputs.size() != n_agents || masks.size() != n_agents) {
    throw diff::ShapeError("joint inputs: expected one tensor per agent");
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    bindings.bind(nodes.inputs[i], inputs[i]);
    bindings.bind(nodes.masks[i], masks[i]);
    Tensor unit(1, n_agents);
    unit[i] = 1.0;
    bindings.bind(nodes.basis[i], std::move(unit));
  }
}

Tensor action_mask(std::span<const int> actions, std::size_t n_actions) {
  Tensor mask(actions.size(), n_actions);
  for (std::size_t r = 0; r < actions.size(); ++r) {
    const int a = actions[r];
    if (a < 0 || static_cast<std::size_t>(a) >= n_actions) {
      throw std::out_of_range("action index out of range");
    }
    mask(r, static_cast<std::size_t>(a)) = 1.0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// QNetworks

QNetworks::QNetworks(NetDims dims, diff::EvalOptions options)
    : dims_(dims), options_(options) {
  dims_.validate();

  agent_net_ = declare_agent(agent_graph_);
  agent_in_ = agent_graph_.constant("inputs");
  agent_out_ = agent_forward(agent_graph_, agent_net_, agent_in_);

  mix_q_ = mix_graph_.constant("q");
  mix_state_ = mix_graph_.constant("state");
  mix_probe_ = mix_graph_.probe(mix_q_, "q");
  mix_nodes_ = declare_mixer(mix_graph_, dims_.mixer);
  mix_out_ = mixer_forward(mix_graph_, mix_nodes_, mix_q_, mix_state_);
  mix_sum_ = mix_graph_.sum(mix_out_);

  joint_net_ = declare_agent(joint_graph_);
  joint_q_ = declare_joint_q(joint_graph_, joint_net_, dims_.n_agents);
}

Tensor QNetworks::agent_values(const ParamSet& agent,
                               const Tensor& inputs) const {
  if (inputs.cols() != dims_.agent_input_width()) {
    throw diff::ShapeError("agent input width mismatch: " +
                           diff::shape_string(inputs));
  }
  Bindings b;
  bind_agent(b, agent_net_, agent);
  b.bind(agent_in_, inputs);
  return diff::forward(agent_graph_, b, options_)[agent_out_];
}

Tensor QNetworks::mix_values(const ParamSet& mixer, const Tensor& q,
                             const Tensor& state) const {
  if (q.cols() != dims_.n_agents) {
    throw diff::ShapeError("mixer expects one column per agent");
  }
  if (state.cols() != dims_.state_width || state.rows() != q.rows()) {
    throw diff::ShapeError("state width mismatch: " +
                           diff::shape_string(state));
  }
  Bindings b;
  bind_mixer(b, mix_nodes_, mixer, dims_);
  b.bind(mix_q_, q);
  b.bind(mix_state_, state);
  return diff::forward(mix_graph_, b, options_)[mix_out_];
}

MixResult QNetworks::mix_with_grads(const ParamSet& mixer, const Tensor& q,
                                    const Tensor& state) const {
  if (q.cols() != dims_.n_agents) {
    throw diff::ShapeError("mixer expects one column per agent");
  }
  if (state.cols() != dims_.state_width || state.rows() != q.rows()) {
    throw diff::ShapeError("state width mismatch: " +
                           diff::shape_string(state));
  }
  Bindings b;
  bind_mixer(b, mix_nodes_, mixer, dims_);
  b.bind(mix_q_, q);
  b.bind(mix_state_, state);
  const diff::Values values = diff::forward(mix_graph_, b, options_);
  // Rows are independent, so d(sum_r Q_tot[r])/dq[r, i] = dQ_tot[r]/dq[r, i].
  const diff::GradientReport report =
      diff::backward(mix_graph_, values, mix_sum_);
  return MixResult{values[mix_out_], report.probe(mix_probe_)};
}

Tensor QNetworks::chosen_values(const ParamSet& agent,
                                std::span<const Tensor> inputs,
                                std::span<const Tensor> masks) const {
  Bindings b;
  bind_agent(b, joint_net_, agent);
  bind_joint_q(b, joint_q_, inputs, masks, dims_.n_agents);
  return diff::forward(joint_graph_, b, options_)[joint_q_.q];
}

GreedyTarget QNetworks::greedy_target(const ParamSet& agent,
                                      const ParamSet& mixer,
                                      std::span<const Tensor> next_inputs,
                                      const Tensor& next_state,
                                      const Tensor* done) const {
  const std::size_t n = dims_.n_agents;
  if (next_inputs.size() != n) {
    throw diff::ShapeError("greedy_target: expected one input per agent");
  }
  const std::size_t rows = next_state.rows();
  GreedyTarget out{Tensor(rows, n), Tensor(rows, 1),
                   std::vector<int>(rows * n)};
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor values = agent_values(agent, next_inputs[i]);
    if (values.rows() != rows) {
      throw diff::ShapeError("greedy_target: row count mismatch");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = values.row_span(r);
      const std::size_t a = greedy_action(row);
      out.actions[r * n + i] = static_cast<int>(a);
      const bool is_done = done != nullptr && (*done)(r, i) != 0.0;
      out.per_agent(r, i) = is_done ? 0.0 : row[a];
    }
  }
  out.q_tot = mix_values(mixer, out.per_agent, next_state);
  return out;
}

// ---------------------------------------------------------------------------
// Single-sample operations

std::vector<double> agent_q(const ParamSet& agent, const NetDims& dims,
                            std::span<const double> obs,
                            std::span<const double> last_action_onehot,
                            std::span<const double> agent_id_onehot) {
  if (obs.size() != dims.obs_width ||
      last_action_onehot.size() != dims.n_actions ||
      agent_id_onehot.size() != dims.n_agents) {
    throw diff::ShapeError("agent_q: input width mismatch");
  }
  std::vector<double> input;
  input.reserve(dims.agent_input_width());
  input.insert(input.end(), obs.begin(), obs.end());
  input.insert(input.end(), last_action_onehot.begin(),
               last_action_onehot.end());
  input.insert(input.end(), agent_id_onehot.begin(), agent_id_onehot.end());
  QNetworks nets(dims);
  const Tensor q = nets.agent_values(
      agent, Tensor(1, dims.agent_input_width(), std::move(input)));
  return {q.data().begin(), q.data().end()};
}

QEval mix(const ParamSet& mixer, const NetDims& dims,
          std::span<const double> q_chosen, std::span<const double> state) {
  if (q_chosen.size() != dims.n_agents) {
    throw diff::ShapeError("mix: expected one value per agent");
  }
  if (state.size() != dims.state_width) {
    throw diff::ShapeError("mix: state width mismatch");
  }
  QNetworks nets(dims);
  const MixResult r = nets.mix_with_grads(
      mixer, Tensor(1, dims.n_agents, {q_chosen.begin(), q_chosen.end()}),
      Tensor(1, dims.state_width, {state.begin(), state.end()}));
  return QEval{r.q_tot.item(),
               {q_chosen.begin(), q_chosen.end()},
               {r.grads.data().begin(), r.grads.data().end()}};
}

double greedy_joint_target(const ParamSet& target_agent,
                           const ParamSet& target_mixer, const NetDims& dims,
                           std::span<const std::vector<double>> next_obs,
                           std::span<const int> next_last_actions,
                           std::span<const double> next_state) {
  if (next_obs.size() != dims.n_agents ||
      next_last_actions.size() != dims.n_agents) {
    throw diff::ShapeError("greedy_joint_target: expected one entry per agent");
  }
  if (next_state.size() != dims.state_width) {
    throw diff::ShapeError("greedy_joint_target: state width mismatch");
  }
  QNetworks nets(dims);
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < dims.n_agents; ++i) {
    inputs.emplace_back(1, dims.agent_input_width(),
                        agent_input(next_obs[i], next_last_actions[i], i, dims));
  }
  const GreedyTarget t = nets.greedy_target(
      target_agent, target_mixer, inputs,
      Tensor(1, dims.state_width, {next_state.begin(), next_state.end()}));
  return t.q_tot.item();
}

}  // namespace der::qnets
