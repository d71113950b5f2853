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
#include <limits>

#include <gtest/gtest.h>

#include "der/diffcore.hpp"
#include "oracle.hpp"

namespace der::diff {
namespace {

using oracle::away_from_zero;
using oracle::gradient_check;
using oracle::kFdTolerance;
using oracle::random_tensor;

TEST(TensorTest, ShapesAndFactories) {
  Tensor t(2, 3, 1.5);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 1.5);
  EXPECT_EQ(Tensor::row({1, 2, 3}).shape(), (std::array<std::size_t, 2>{1, 3}));
  EXPECT_EQ(Tensor::column({1, 2}).shape(), (std::array<std::size_t, 2>{2, 1}));
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor(0, 3), ShapeError);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_THROW(Tensor::checked(1, 1, {std::nan("")}), NonFiniteError);
}

TEST(GraphTest, ForwardBroadcastsAndReductions) {
  Graph g;
  NodeId a = g.constant("a");
  NodeId row = g.constant("row");
  NodeId s = g.constant("s");
  NodeId added = g.add(a, row);
  NodeId scaled = g.mul(s, a);
  NodeId rows = g.sum(a, SumAxis::kRows);
  NodeId cols = g.sum(a, SumAxis::kCols);
  NodeId all = g.sum(a);
  Bindings b;
  b.bind(a, Tensor(2, 2, {1, 2, 3, 4}));
  b.bind(row, Tensor::row({10, 20}));
  b.bind(s, Tensor::scalar(3));
  Values v = forward(g, b);
  EXPECT_EQ(v[added], Tensor(2, 2, {11, 22, 13, 24}));
  EXPECT_EQ(v[scaled], Tensor(2, 2, {3, 6, 9, 12}));
  EXPECT_EQ(v[rows], Tensor::column({3, 7}));
  EXPECT_EQ(v[cols], Tensor::row({4, 6}));
  EXPECT_EQ(v[all].item(), 10.0);
}

TEST(GraphTest, ElementwiseValues) {
  Graph g;
  NodeId x = g.constant("x");
  NodeId y = g.constant("y");
  NodeId r = g.relu(x);
  NodeId ab = g.abs(x);
  NodeId e = g.elu(x, 0.5);
  NodeId se = g.squared_error(x, y);
  Bindings b;
  b.bind(x, Tensor::row({-2.0, 0.0, 3.0}));
  b.bind(y, Tensor::row({1.0, 1.0, 1.0}));
  Values v = forward(g, b);
  EXPECT_EQ(v[r], Tensor::row({0.0, 0.0, 3.0}));
  EXPECT_EQ(v[ab], Tensor::row({2.0, 0.0, 3.0}));
  EXPECT_DOUBLE_EQ(v[e][0], 0.5 * (std::exp(-2.0) - 1.0));
  EXPECT_EQ(v[e][2], 3.0);
  EXPECT_EQ(v[se], Tensor::row({9.0, 1.0, 4.0}));
}

TEST(GraphTest, MatMulValue) {
  Graph g;
  NodeId a = g.constant("a");
  NodeId b = g.constant("b");
  NodeId c = g.matmul(a, b);
  Bindings bind;
  bind.bind(a, Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  bind.bind(b, Tensor(3, 1, {1, 0, -1}));
  EXPECT_EQ(forward(g, bind)[c], Tensor::column({-2, -2}));
}

TEST(GraphTest, ShapeErrors) {
  Graph g;
  NodeId a = g.constant("a");
  NodeId b = g.constant("b");
  NodeId m = g.matmul(a, b);
  Bindings bind;
  bind.bind(a, Tensor(2, 3));
  bind.bind(b, Tensor(2, 3));
  EXPECT_THROW(forward(g, bind), ShapeError);
  (void)m;

  Graph g2;
  NodeId x = g2.constant("x");
  NodeId y = g2.constant("y");
  g2.add(x, y);
  Bindings b2;
  b2.bind(x, Tensor(2, 3));
  b2.bind(y, Tensor(3, 1));
  EXPECT_THROW(forward(g2, b2), ShapeError);
}

TEST(GraphTest, UnboundLeafAndUnknownNodes) {
  Graph g;
  NodeId a = g.parameter("a");
  g.relu(a);
  Bindings b;
  EXPECT_THROW(forward(g, b), GraphError);
  EXPECT_THROW(g.relu(NodeId{42}), GraphError);
  EXPECT_THROW(g.probe(NodeId{42}), GraphError);
}

TEST(GraphTest, CheckedModeRejectsNonFinite) {
  Graph g;
  NodeId a = g.constant("a");
  NodeId b = g.mul(a, a);
  Bindings bind;
  bind.bind(a, Tensor::scalar(1e200));
  EXPECT_THROW(forward(g, bind, {.checked = true}), NonFiniteError);
  EXPECT_TRUE(std::isinf(forward(g, bind, {.checked = false})[b].item()));
}

TEST(GraphTest, BackwardRequiresScalarLoss) {
  Graph g;
  NodeId a = g.parameter("a");
  NodeId r = g.relu(a);
  Bindings b;
  b.bind(a, Tensor(2, 2, 1.0));
  EXPECT_THROW(backward(g, b, r), ShapeError);
}

TEST(GraphTest, AbsDerivativeAtZeroIsZero) {
  Graph g;
  NodeId a = g.parameter("a");
  NodeId loss = g.sum(g.abs(a));
  Bindings b;
  b.bind(a, Tensor::row({-1.0, 0.0, 2.0}));
  EXPECT_EQ(backward(g, b, loss).parameter(a), Tensor::row({-1.0, 0.0, 1.0}));
}

TEST(GraphTest, UnreachedParameterHasZeroGradient) {
  Graph g;
  NodeId a = g.parameter("a");
  NodeId unused = g.parameter("unused");
  NodeId loss = g.sum(a);
  Bindings b;
  b.bind(a, Tensor(1, 2, 1.0));
  b.bind(unused, Tensor(3, 2, 5.0));
  const GradientReport report = backward(g, b, loss);
  EXPECT_EQ(report.parameter(unused), Tensor(3, 2, 0.0));
  EXPECT_THROW(report.parameter(loss), GraphError);
}

TEST(GraphTest, SharedLeafAccumulates) {
  // loss = sum(x * x) -> 2x
  Graph g;
  NodeId x = g.parameter("x");
  NodeId loss = g.sum(g.mul(x, x));
  Bindings b;
  b.bind(x, Tensor::row({1.0, -3.0}));
  EXPECT_EQ(backward(g, b, loss).parameter(x), Tensor::row({2.0, -6.0}));
}

TEST(GraphTest, ProbeReportsIntermediateGradient) {
  Graph g;
  NodeId x = g.parameter("x");
  NodeId h = g.relu(x);
  ProbeId p = g.probe(h, "h");
  NodeId k = g.constant("k");
  NodeId loss = g.sum(g.mul(h, k));
  Bindings b;
  b.bind(x, Tensor::row({1.0, -1.0}));
  b.bind(k, Tensor::scalar(2.5));
  const GradientReport report = backward(g, b, loss);
  EXPECT_EQ(report.probe(p), Tensor::row({2.5, 2.5}));
  EXPECT_EQ(g.find_probe("h"), p);
  EXPECT_FALSE(g.find_probe("missing").has_value());
}

// Each primitive against central differences, over random shapes.
class PrimitiveGradientTest : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradientTest, MatchesFiniteDifferences) {
  Rng rng = derive_rng(20260101, static_cast<std::uint64_t>(GetParam()));
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  const std::size_t r = dim(rng), c = dim(rng), k = dim(rng);
  auto check = [&](auto build, std::vector<Tensor> inputs) {
    Graph g;
    std::vector<NodeId> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      leaves.push_back(g.parameter("in" + std::to_string(i)));
    }
    NodeId out = build(g, leaves);
    // Random projection so every output entry matters.
    NodeId proj = g.constant("proj");
    NodeId loss = g.sum(g.mul(out, proj));
    Bindings b;
    for (std::size_t i = 0; i < inputs.size(); ++i) b.bind(leaves[i], inputs[i]);
    const Tensor value = forward(g, [&] {
      Bindings tmp = b;
      tmp.bind(proj, Tensor::scalar(1.0));
      return tmp;
    }())[out];
    b.bind(proj, random_tensor(rng, value.rows(), value.cols()));
    for (NodeId leaf : leaves) {
      EXPECT_LE(gradient_check(g, b, loss, leaf), kFdTolerance);
    }
  };
  check([](Graph& g, auto& l) { return g.add(l[0], l[1]); },
        {random_tensor(rng, r, c), random_tensor(rng, r, c)});
  check([](Graph& g, auto& l) { return g.add(l[0], l[1]); },
        {random_tensor(rng, r, c), random_tensor(rng, 1, c)});
  check([](Graph& g, auto& l) { return g.add(l[0], l[1]); },
        {random_tensor(rng, r, c), random_tensor(rng, 1, 1)});
  check([](Graph& g, auto& l) { return g.mul(l[0], l[1]); },
        {random_tensor(rng, r, c), random_tensor(rng, r, c)});
  check([](Graph& g, auto& l) { return g.mul(l[0], l[1]); },
        {random_tensor(rng, 1, 1), random_tensor(rng, r, c)});
  check([](Graph& g, auto& l) { return g.matmul(l[0], l[1]); },
        {random_tensor(rng, r, k), random_tensor(rng, k, c)});
  check([](Graph& g, auto& l) { return g.relu(l[0]); },
        {away_from_zero(rng, r, c)});
  check([](Graph& g, auto& l) { return g.abs(l[0]); },
        {away_from_zero(rng, r, c)});
  check([](Graph& g, auto& l) { return g.elu(l[0], 0.7); },
        {away_from_zero(rng, r, c)});
  check([](Graph& g, auto& l) { return g.sum(l[0], SumAxis::kRows); },
        {random_tensor(rng, r, c)});
  check([](Graph& g, auto& l) { return g.sum(l[0], SumAxis::kCols); },
        {random_tensor(rng, r, c)});
  check([](Graph& g, auto& l) { return g.sum(l[0], SumAxis::kAll); },
        {random_tensor(rng, r, c)});
  check([](Graph& g, auto& l) { return g.squared_error(l[0], l[1]); },
        {random_tensor(rng, r, c), random_tensor(rng, r, c)});
}

INSTANTIATE_TEST_SUITE_P(Draws, PrimitiveGradientTest, ::testing::Range(0, 20));

TEST(GraphTest, ComposedChainMatchesFiniteDifferences) {
  Rng rng = derive_rng(7, 0);
  Graph g;
  NodeId x = g.constant("x");
  NodeId w1 = g.parameter("w1");
  NodeId b1 = g.parameter("b1");
  NodeId w2 = g.parameter("w2");
  NodeId h = g.elu(g.add(g.matmul(x, w1), b1));
  NodeId y = g.sum(g.abs(g.matmul(h, w2)), SumAxis::kRows);
  NodeId t = g.constant("t");
  NodeId loss = g.sum(g.squared_error(y, t));
  Bindings b;
  b.bind(x, random_tensor(rng, 5, 3));
  b.bind(w1, random_tensor(rng, 3, 4));
  b.bind(b1, random_tensor(rng, 1, 4));
  b.bind(w2, random_tensor(rng, 4, 2));
  b.bind(t, random_tensor(rng, 5, 1));
  for (NodeId leaf : {w1, b1, w2}) {
    EXPECT_LE(gradient_check(g, b, loss, leaf), kFdTolerance);
  }
}

}  // namespace
}  // namespace der::diff
