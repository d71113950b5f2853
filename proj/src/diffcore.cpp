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

#include "der/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace der::diff {

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("tensor dimensions must be positive");
  }
  data_.assign(rows * cols, fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("tensor dimensions must be positive");
  }
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "tensor data length " << data_.size() << " does not match shape ["
        << rows << "x" << cols << "]";
    throw ShapeError(msg.str());
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::checked(std::size_t rows, std::size_t cols,
                       std::vector<double> data) {
  Tensor t(rows, cols, std::move(data));
  if (!t.all_finite()) throw NonFiniteError("tensor has non-finite entries");
  return t;
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape_string(*this));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Tensor& t) {
  std::ostringstream out;
  out << "[" << t.rows() << "x" << t.cols() << "]";
  return out.str();
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kMatMul: return "matmul";
    case Op::kRelu: return "relu";
    case Op::kAbs: return "abs";
    case Op::kElu: return "elu";
    case Op::kSum: return "sum";
    case Op::kSquaredError: return "squared_error";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Graph

NodeId Graph::append(Node node) {
  const auto next = static_cast<std::uint32_t>(nodes_.size());
  for (std::uint8_t k = 0; k < node.arity; ++k) {
    if (node.inputs[k].index >= next) {
      throw GraphError("graph not topologically ordered: node " +
                       std::to_string(next) + " (" +
                       std::string(op_name(node.op)) + ") reads node " +
                       std::to_string(node.inputs[k].index));
    }
  }
  nodes_.push_back(std::move(node));
  return NodeId{next};
}

NodeId Graph::parameter(std::string name) {
  return append(Node{.op = Op::kParameter, .name = std::move(name)});
}

NodeId Graph::constant(std::string name) {
  return append(Node{.op = Op::kConstant, .name = std::move(name)});
}

NodeId Graph::add(NodeId a, NodeId b) {
  return append(Node{.op = Op::kAdd, .inputs = {a, b}, .arity = 2});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  return append(Node{.op = Op::kMul, .inputs = {a, b}, .arity = 2});
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  return append(Node{.op = Op::kMatMul, .inputs = {a, b}, .arity = 2});
}

NodeId Graph::relu(NodeId a) {
  return append(Node{.op = Op::kRelu, .inputs = {a}, .arity = 1});
}

NodeId Graph::abs(NodeId a) {
  return append(Node{.op = Op::kAbs, .inputs = {a}, .arity = 1});
}

NodeId Graph::elu(NodeId a, double alpha) {
  return append(
      Node{.op = Op::kElu, .inputs = {a}, .arity = 1, .alpha = alpha});
}

NodeId Graph::sum(NodeId a, SumAxis axis) {
  return append(Node{.op = Op::kSum, .inputs = {a}, .arity = 1, .axis = axis});
}

NodeId Graph::squared_error(NodeId a, NodeId b) {
  return append(Node{.op = Op::kSquaredError, .inputs = {a, b}, .arity = 2});
}

ProbeId Graph::probe(NodeId node, std::string name) {
  if (node.index >= nodes_.size()) {
    throw GraphError("probe on unknown node " + std::to_string(node.index));
  }
  probes_.push_back(node);
  probe_names_.push_back(std::move(name));
  return ProbeId{static_cast<std::uint32_t>(probes_.size() - 1)};
}

const Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw GraphError("unknown node " + std::to_string(id.index));
  }
  return nodes_[id.index];
}

const std::string& Graph::probe_name(ProbeId id) const {
  if (id.index >= probe_names_.size()) {
    throw GraphError("unknown probe " + std::to_string(id.index));
  }
  return probe_names_[id.index];
}

std::optional<ProbeId> Graph::find_probe(std::string_view name) const {
  for (std::size_t i = 0; i < probe_names_.size(); ++i) {
    if (probe_names_[i] == name) {
      return ProbeId{static_cast<std::uint32_t>(i)};
    }
  }
  return std::nullopt;
}

void Graph::validate() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    for (std::uint8_t k = 0; k < n.arity; ++k) {
      if (n.inputs[k].index >= i) {
        throw GraphError("graph not topologically ordered at node " +
                         std::to_string(i));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Bindings

void Bindings::bind(NodeId leaf, Tensor value) {
  if (values_.size() <= leaf.index) values_.resize(leaf.index + 1);
  values_[leaf.index] = std::move(value);
}

bool Bindings::contains(NodeId leaf) const {
  return leaf.index < values_.size() && values_[leaf.index].has_value();
}

const Tensor& Bindings::at(NodeId leaf) const {
  if (!contains(leaf)) {
    throw GraphError("unbound leaf " + std::to_string(leaf.index));
  }
  return *values_[leaf.index];
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

[[noreturn]] void shape_mismatch(const Node& n, const Tensor& a,
                                 const Tensor& b) {
  throw ShapeError(std::string(op_name(n.op)) + ": incompatible shapes " +
                   shape_string(a) + " and " + shape_string(b));
}

bool is_scalar(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

// C = A * B
Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      if (s == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
  return c;
}

// C += A^T * G  with A m x k, G m x n, C k x n
void matmul_tn_acc(const Tensor& a, const Tensor& g, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
  const double* pa = a.data().data();
  const double* pg = g.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      if (s == 0.0) continue;
      double* crow = pc + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * grow[j];
    }
  }
}

// C += G * B^T  with G m x n, B k x n, C m x k
void matmul_nt_acc(const Tensor& g, const Tensor& b, Tensor& c) {
  const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
  const double* pg = g.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = pg + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      pc[i * k + p] += acc;
    }
  }
}

Tensor eval_node(const Node& n, const Tensor* a, const Tensor* b) {
  switch (n.op) {
    case Op::kAdd: {
      if (a->same_shape(*b)) {
        Tensor out = *a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*b)[i];
        return out;
      }
      if (is_scalar(*b)) {
        Tensor out = *a;
        const double s = b->item();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
        return out;
      }
      if (b->rows() == 1 && b->cols() == a->cols()) {
        Tensor out = *a;
        for (std::size_t r = 0; r < out.rows(); ++r) {
          auto row = out.row_span(r);
          for (std::size_t c = 0; c < row.size(); ++c) row[c] += (*b)[c];
        }
        return out;
      }
      shape_mismatch(n, *a, *b);
    }
    case Op::kMul: {
      if (a->same_shape(*b)) {
        Tensor out = *a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*b)[i];
        return out;
      }
      if (is_scalar(*a) || is_scalar(*b)) {
        const Tensor& big = is_scalar(*a) ? *b : *a;
        const double s = is_scalar(*a) ? a->item() : b->item();
        Tensor out = big;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
        return out;
      }
      shape_mismatch(n, *a, *b);
    }
    case Op::kMatMul:
      if (a->cols() != b->rows()) shape_mismatch(n, *a, *b);
      return matmul_nn(*a, *b);
    case Op::kRelu: {
      Tensor out = *a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = out[i] > 0.0 ? out[i] : 0.0;
      }
      return out;
    }
    case Op::kAbs: {
      Tensor out = *a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
      return out;
    }
    case Op::kElu: {
      Tensor out = *a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = x > 0.0 ? x : n.alpha * std::expm1(x);
      }
      return out;
    }
    case Op::kSum: {
      switch (n.axis) {
        case SumAxis::kAll: {
          double acc = 0.0;
          for (double v : a->data()) acc += v;
          return Tensor::scalar(acc);
        }
        case SumAxis::kRows: {
          Tensor out(a->rows(), 1);
          for (std::size_t r = 0; r < a->rows(); ++r) {
            double acc = 0.0;
            for (double v : a->row_span(r)) acc += v;
            out[r] = acc;
          }
          return out;
        }
        case SumAxis::kCols: {
          Tensor out(1, a->cols());
          for (std::size_t r = 0; r < a->rows(); ++r) {
            auto row = a->row_span(r);
            for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
          }
          return out;
        }
      }
      break;
    }
    case Op::kSquaredError: {
      if (!a->same_shape(*b)) shape_mismatch(n, *a, *b);
      Tensor out = *a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out[i] - (*b)[i];
        out[i] = d * d;
      }
      return out;
    }
    case Op::kParameter:
    case Op::kConstant:
      break;
  }
  throw GraphError("cannot evaluate node of kind " +
                   std::string(op_name(n.op)));
}

void accumulate(std::optional<Tensor>& slot, const Tensor& like,
                auto&& write) {
  if (!slot) slot.emplace(like.rows(), like.cols());
  write(*slot);
}

}  // namespace

// ---------------------------------------------------------------------------
// forward / backward

Values forward(const Graph& graph, const Bindings& bindings,
               EvalOptions options) {
  std::vector<Tensor> values;
  values.reserve(graph.size());
  const auto nodes = graph.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    const NodeId id{static_cast<std::uint32_t>(i)};
    if (n.is_leaf()) {
      if (!bindings.contains(id)) {
        throw GraphError("unbound leaf " + std::to_string(i) +
                         (n.name.empty() ? "" : " '" + n.name + "'"));
      }
      values.push_back(bindings.at(id));
    } else {
      const Tensor* a = &values[n.inputs[0].index];
      const Tensor* b = n.arity > 1 ? &values[n.inputs[1].index] : nullptr;
      values.push_back(eval_node(n, a, b));
    }
    if (options.checked && !values.back().all_finite()) {
      throw NonFiniteError("non-finite value at node " + std::to_string(i) +
                           " (" + std::string(op_name(n.op)) +
                           (n.name.empty() ? "" : " '" + n.name + "'") + ")");
    }
  }
  return Values(std::move(values));
}

GradientReport backward(const Graph& graph, const Values& values,
                        NodeId loss) {
  graph.validate();
  if (values.size() != graph.size()) {
    throw GraphError("values do not belong to this graph");
  }
  const Tensor& loss_value = values[loss];
  if (loss_value.rows() != 1 || loss_value.cols() != 1) {
    throw ShapeError("backward requires a scalar loss, got " +
                     shape_string(loss_value));
  }

  const auto nodes = graph.nodes();
  const std::size_t count = loss.index + 1;

  std::vector<char> is_probe(graph.size(), 0);
  for (NodeId p : graph.probes()) is_probe[p.index] = 1;

  // Only nodes on a path from a parameter or probe need adjoints.
  std::vector<char> needs(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const Node& n = nodes[i];
    needs[i] = n.op == Op::kParameter || is_probe[i];
    for (std::uint8_t k = 0; k < n.arity; ++k) {
      if (needs[n.inputs[k].index]) needs[i] = 1;
    }
  }

  std::vector<std::optional<Tensor>> adj(count);
  adj[loss.index] = Tensor::scalar(1.0);

  for (std::size_t idx = count; idx-- > 0;) {
    const Node& n = nodes[idx];
    if (n.is_leaf() || !adj[idx]) continue;
    const Tensor& g = *adj[idx];
    const NodeId ia = n.inputs[0];
    const NodeId ib = n.inputs[1];
    const Tensor& a = values[ia];
    const bool need_a = needs[ia.index];
    const bool need_b = n.arity > 1 && needs[ib.index];

    switch (n.op) {
      case Op::kAdd: {
        const Tensor& b = values[ib];
        if (need_a) {
          accumulate(adj[ia.index], a, [&](Tensor& da) {
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
          });
        }
        if (need_b) {
          accumulate(adj[ib.index], b, [&](Tensor& db) {
            if (b.same_shape(a)) {
              for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i];
            } else if (is_scalar(b)) {
              double acc = 0.0;
              for (double v : g.data()) acc += v;
              db[0] += acc;
            } else {
              for (std::size_t r = 0; r < g.rows(); ++r) {
                auto row = g.row_span(r);
                for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
              }
            }
          });
        }
        break;
      }
      case Op::kMul: {
        const Tensor& b = values[ib];
        if (a.same_shape(b)) {
          if (need_a) {
            accumulate(adj[ia.index], a, [&](Tensor& da) {
              for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * b[i];
            });
          }
          if (need_b) {
            accumulate(adj[ib.index], b, [&](Tensor& db) {
              for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * a[i];
            });
          }
        } else {
          const bool a_scalar = is_scalar(a);
          const Tensor& big = a_scalar ? b : a;
          const double s = a_scalar ? a.item() : b.item();
          const NodeId big_id = a_scalar ? ib : ia;
          const NodeId small_id = a_scalar ? ia : ib;
          if (needs[big_id.index]) {
            accumulate(adj[big_id.index], big, [&](Tensor& d) {
              for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * s;
            });
          }
          if (needs[small_id.index]) {
            accumulate(adj[small_id.index], values[small_id], [&](Tensor& d) {
              double acc = 0.0;
              for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * big[i];
              d[0] += acc;
            });
          }
        }
        break;
      }
      case Op::kMatMul: {
        const Tensor& b = values[ib];
        if (need_a) {
          accumulate(adj[ia.index], a,
                     [&](Tensor& da) { matmul_nt_acc(g, b, da); });
        }
        if (need_b) {
          accumulate(adj[ib.index], b,
                     [&](Tensor& db) { matmul_tn_acc(a, g, db); });
        }
        break;
      }
      case Op::kRelu:
        if (need_a) {
          accumulate(adj[ia.index], a, [&](Tensor& da) {
            for (std::size_t i = 0; i < da.size(); ++i) {
              if (a[i] > 0.0) da[i] += g[i];
            }
          });
        }
        break;
      case Op::kAbs:
        if (need_a) {
          accumulate(adj[ia.index], a, [&](Tensor& da) {
            for (std::size_t i = 0; i < da.size(); ++i) {
              if (a[i] > 0.0) {
                da[i] += g[i];
              } else if (a[i] < 0.0) {
                da[i] -= g[i];
              }
            }
          });
        }
        break;
      case Op::kElu:
        if (need_a) {
          accumulate(adj[ia.index], a, [&](Tensor& da) {
            for (std::size_t i = 0; i < da.size(); ++i) {
              const double x = a[i];
              da[i] += g[i] * (x > 0.0 ? 1.0 : n.alpha * std::exp(x));
            }
          });
        }
        break;
      case Op::kSum:
        if (need_a) {
          accumulate(adj[ia.index], a, [&](Tensor& da) {
            for (std::size_t r = 0; r < da.rows(); ++r) {
              auto row = da.row_span(r);
              for (std::size_t c = 0; c < row.size(); ++c) {
                switch (n.axis) {
                  case SumAxis::kAll: row[c] += g[0]; break;
                  case SumAxis::kRows: row[c] += g[r]; break;
                  case SumAxis::kCols: row[c] += g[c]; break;
                }
              }
            }
          });
        }
        break;
      case Op::kSquaredError: {
        const Tensor& b = values[ib];
        if (need_a) {
          accumulate(adj[ia.index], a, [&](Tensor& da) {
            for (std::size_t i = 0; i < da.size(); ++i) {
              da[i] += 2.0 * (a[i] - b[i]) * g[i];
            }
          });
        }
        if (need_b) {
          accumulate(adj[ib.index], b, [&](Tensor& db) {
            for (std::size_t i = 0; i < db.size(); ++i) {
              db[i] -= 2.0 * (a[i] - b[i]) * g[i];
            }
          });
        }
        break;
      }
      case Op::kParameter:
      case Op::kConstant:
        break;
    }
    // Intermediate adjoints are dropped once consumed unless probed.
    if (!is_probe[idx]) adj[idx].reset();
  }

  std::vector<std::optional<Tensor>> leaf_grads(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (nodes[i].op != Op::kParameter) continue;
    const NodeId id{static_cast<std::uint32_t>(i)};
    if (i < count && adj[i]) {
      leaf_grads[i] = std::move(*adj[i]);
    } else {
      leaf_grads[i] = Tensor(values[id].rows(), values[id].cols());
    }
  }
  std::vector<Tensor> probe_grads;
  probe_grads.reserve(graph.probes().size());
  for (NodeId p : graph.probes()) {
    if (p.index < count && adj[p.index]) {
      probe_grads.push_back(*adj[p.index]);
    } else {
      probe_grads.emplace_back(values[p].rows(), values[p].cols());
    }
  }
  return GradientReport(std::move(leaf_grads), std::move(probe_grads));
}

GradientReport backward(const Graph& graph, const Bindings& bindings,
                        NodeId loss, EvalOptions options) {
  const Values values = forward(graph, bindings, options);
  return backward(graph, values, loss);
}

const Tensor& GradientReport::parameter(NodeId leaf) const {
  if (leaf.index >= leaf_grads_.size() || !leaf_grads_[leaf.index]) {
    throw GraphError("node " + std::to_string(leaf.index) +
                     " is not a parameter leaf");
  }
  return *leaf_grads_[leaf.index];
}

const Tensor& GradientReport::probe(ProbeId probe) const {
  if (probe.index >= probe_grads_.size()) {
    throw GraphError("unknown probe " + std::to_string(probe.index));
  }
  return probe_grads_[probe.index];
}

const Tensor& probe_gradient(const GradientReport& report, ProbeId probe) {
  return report.probe(probe);
}

}  // namespace der::diff
