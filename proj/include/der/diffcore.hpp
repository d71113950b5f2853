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

// Minimal reverse-mode differentiation over dense row-major matrices of
// doubles. A Graph is an append-only list of primitive nodes; inputs always
// precede the node that consumes them, so the append order is a topological
// order. Leaves are bound to tensors at evaluation time, which keeps a Graph
// reusable across batches of different row counts.

#ifndef DER_DIFFCORE_HPP_
#define DER_DIFFCORE_HPP_

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace der::diff {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Dense rows x cols matrix. Both dimensions are always >= 1; a scalar is 1x1.
class Tensor {
 public:
  Tensor() : Tensor(1, 1) {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(1, 1, value); }
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);
  // Same as the data constructor but rejects NaN/Inf entries.
  static Tensor checked(std::size_t rows, std::size_t cols,
                        std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row_span(std::size_t r) {
    return std::span<double>(data_).subspan(r * cols_, cols_);
  }

  // Value of a 1x1 tensor.
  double item() const;
  bool all_finite() const;
  void fill(double value);

  // Exact equality of shape and every entry.
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
  std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

struct NodeId {
  std::uint32_t index = 0;
  friend auto operator<=>(NodeId, NodeId) = default;
};

struct ProbeId {
  std::uint32_t index = 0;
  friend auto operator<=>(ProbeId, ProbeId) = default;
};

enum class Op : std::uint8_t {
  kParameter,
  kConstant,
  kAdd,           // same shape, or rhs a 1 x cols row / 1x1 scalar broadcast
  kMul,           // elementwise, either side may be a 1x1 scalar
  kMatMul,
  kRelu,          // max(x, 0)
  kAbs,           // d|x|/dx at 0 is taken as 0
  kElu,           // x > 0 ? x : alpha * (exp(x) - 1)
  kSum,           // see SumAxis
  kSquaredError,  // elementwise (a - b)^2
};

enum class SumAxis : std::uint8_t {
  kAll,   // -> 1x1
  kRows,  // sum along each row -> rows x 1
  kCols,  // sum down each column -> 1 x cols
};

std::string_view op_name(Op op);

struct Node {
  Op op = Op::kConstant;
  std::array<NodeId, 2> inputs{};
  std::uint8_t arity = 0;
  SumAxis axis = SumAxis::kAll;
  double alpha = 1.0;
  std::string name;

  bool is_leaf() const { return op == Op::kParameter || op == Op::kConstant; }
};

class Graph {
 public:
  NodeId parameter(std::string name);
  NodeId constant(std::string name);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId relu(NodeId a);
  NodeId abs(NodeId a);
  NodeId elu(NodeId a, double alpha = 1.0);
  NodeId sum(NodeId a, SumAxis axis = SumAxis::kAll);
  NodeId squared_error(NodeId a, NodeId b);

  // Registers `node` so that backward() reports the loss gradient with
  // respect to its value. Any node may be probed, including constants.
  ProbeId probe(NodeId node, std::string name = {});

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const;
  std::span<const Node> nodes() const { return nodes_; }
  std::span<const NodeId> probes() const { return probes_; }
  const std::string& probe_name(ProbeId id) const;
  std::optional<ProbeId> find_probe(std::string_view name) const;

  // Throws GraphError when some node consumes an input that does not
  // precede it.
  void validate() const;

 private:
  NodeId append(Node node);

  std::vector<Node> nodes_;
  std::vector<NodeId> probes_;
  std::vector<std::string> probe_names_;
};

// Leaf values for one evaluation. Tensors are stored by value.
class Bindings {
 public:
  void bind(NodeId leaf, Tensor value);
  bool contains(NodeId leaf) const;
  const Tensor& at(NodeId leaf) const;

 private:
  std::vector<std::optional<Tensor>> values_;
};

struct EvalOptions {
  // Reject non-finite leaf values and node outputs.
  bool checked = true;
};

class Values {
 public:
  explicit Values(std::vector<Tensor> values) : values_(std::move(values)) {}
  const Tensor& operator[](NodeId id) const { return values_.at(id.index); }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<Tensor> values_;
};

class GradientReport {
 public:
  GradientReport(std::vector<std::optional<Tensor>> leaf_grads,
                 std::vector<Tensor> probe_grads)
      : leaf_grads_(std::move(leaf_grads)),
        probe_grads_(std::move(probe_grads)) {}

  // Gradient with respect to a parameter leaf. Parameters that do not reach
  // the loss get a zero tensor of the bound shape.
  const Tensor& parameter(NodeId leaf) const;
  const Tensor& probe(ProbeId probe) const;
  std::size_t probe_count() const { return probe_grads_.size(); }

 private:
  std::vector<std::optional<Tensor>> leaf_grads_;
  std::vector<Tensor> probe_grads_;
};

Values forward(const Graph& graph, const Bindings& bindings,
               EvalOptions options = {});

GradientReport backward(const Graph& graph, const Values& values,
                        NodeId loss);
GradientReport backward(const Graph& graph, const Bindings& bindings,
                        NodeId loss, EvalOptions options = {});

const Tensor& probe_gradient(const GradientReport& report, ProbeId probe);

}  // namespace der::diff

#endif  // DER_DIFFCORE_HPP_
