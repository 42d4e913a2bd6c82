// Copyright 2026 The milvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <doctest.h>

#include "milvae/errors.hpp"
#include "milvae/nn.hpp"
#include "milvae/rng.hpp"
#include "oracles.hpp"

using namespace milvae;

TEST_CASE("init_weights draws N(0, 0.01^2)") {
  Rng rng(7);
  // One million entries; the sample mean must land within 3 sigma of 0 and
  // the sample std within 1% of 0.01.
  const Matrix w = init_weights(1000, 1000, rng);
  const double n = 1e6;
  const double mean = w.sum() / n;
  const double sd = std::sqrt((w.array() - mean).square().sum() / n);
  CHECK(std::abs(mean) < 3.0 * 0.01 / std::sqrt(n));
  CHECK(std::abs(sd - 0.01) < 0.01 * 0.01);
}

TEST_CASE("init_weights is deterministic per seed") {
  Rng a(123), b(123);
  const Matrix w1 = init_weights(3, 3, a);
  const Matrix w2 = init_weights(3, 3, b);
  CHECK(w1 == w2);
  Rng c(124);
  CHECK(init_weights(3, 3, c) != w1);
}

TEST_CASE("init_weights rejects degenerate shapes") {
  Rng rng(1);
  CHECK_THROWS_AS(init_weights(0, 3, rng), InvalidShapeError);
  CHECK_THROWS_AS(init_weights(3, 0, rng), InvalidShapeError);
  CHECK_THROWS_AS(init_weights(-2, 3, rng), InvalidShapeError);
}

TEST_CASE("forward computes activation(Wx + b)") {
  DenseLayer layer;
  layer.weights = Matrix::Identity(2, 2);
  layer.bias = Vector::Zero(2);
  Vector x(2);
  x << 1.0, -2.0;

  layer.activation = Activation::kLinear;
  CHECK(forward(layer, x) == x);

  layer.activation = Activation::kRelu;
  const Vector y = forward(layer, x);
  CHECK(y(0) == 1.0);
  CHECK(y(1) == 0.0);
}

TEST_CASE("forward matches the straight-line matmul oracle") {
  Rng rng(42);
  for (const Activation act :
       {Activation::kLinear, Activation::kRelu, Activation::kSigmoid, Activation::kSoftmax}) {
    DenseLayer layer = make_layer(4, 3, act, rng);
    layer.weights = rng.gaussian(4, 3, 1.0);
    layer.bias = rng.gaussian(4, 1, 0.5).col(0);
    const Vector x = rng.gaussian(3, 1, 1.0).col(0);
    const Vector got = forward(layer, x);
    const Vector want = oracle::dense_forward(layer, x);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);

    // Batch forward agrees column-by-column.
    const Matrix xb = rng.gaussian(3, 5, 1.0);
    const Matrix gotb = forward(layer, xb);
    for (Index c = 0; c < 5; ++c) {
      CHECK((gotb.col(c) - oracle::dense_forward(layer, xb.col(c))).cwiseAbs().maxCoeff() <
            1e-12);
    }
  }
}

TEST_CASE("forward rejects length mismatches") {
  Rng rng(5);
  const DenseLayer layer = make_layer(4, 3, Activation::kLinear, rng);
  const Vector short_x = Vector::Zero(2);
  const Matrix wide_x = Matrix::Zero(5, 2);
  CHECK_THROWS_AS(forward(layer, short_x), InvalidShapeError);
  CHECK_THROWS_AS(forward(layer, wide_x), InvalidShapeError);
}

TEST_CASE("dropout: identity cases") {
  Rng rng(9);
  const Vector x = rng.gaussian(16, 1, 1.0).col(0);
  CHECK(dropout(x, 0.0, Mode::kTrain, rng) == x);
  CHECK(dropout(x, 0.25, Mode::kInfer, rng) == x);
}

TEST_CASE("dropout preserves the expectation") {
  Rng rng(10);
  const Matrix ones = Matrix::Ones(1000, 1000);
  const Matrix dropped = dropout(ones, 0.25, Mode::kTrain, rng);
  const double mean = dropped.sum() / 1e6;
  // Var of one inverted-dropout sample of 1.0 at rate r is r/(1-r) = 1/3.
  const double sigma = std::sqrt(1.0 / 3.0) / 1000.0;
  CHECK(std::abs(mean - 1.0) < 3.0 * sigma);
  // Survivors carry the 1/(1-rate) scale.
  for (Index i = 0; i < 100; ++i) {
    const double v = dropped(i, 0);
    CHECK((v == 0.0 || std::abs(v - 4.0 / 3.0) < 1e-15));
  }
}

TEST_CASE("dropout rejects rates outside [0,1)") {
  Rng rng(11);
  const Vector x = Vector::Ones(4);
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::kTrain, rng), InvalidHyperparameterError);
  CHECK_THROWS_AS(dropout(x, 1.5, Mode::kTrain, rng), InvalidHyperparameterError);
  CHECK_THROWS_AS(dropout(x, -0.1, Mode::kTrain, rng), InvalidHyperparameterError);
}

TEST_CASE("rmsprop: zero gradient leaves params, decays accumulator") {
  Matrix p = Matrix::Constant(2, 2, 1.5);
  Matrix g = Matrix::Zero(2, 2);
  Matrix acc = Matrix::Constant(2, 2, 0.4);
  rmsprop_update(p, g, acc, 0.1, 0.9, 1e-8);
  CHECK(p == Matrix::Constant(2, 2, 1.5));
  CHECK((acc - Matrix::Constant(2, 2, 0.36)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("rmsprop single step matches the hand computation") {
  Matrix p = Matrix::Zero(1, 1);
  Matrix g = Matrix::Constant(1, 1, 1.0);
  Matrix acc = Matrix::Zero(1, 1);
  rmsprop_update(p, g, acc, 0.1, 0.9, 1e-8);
  // acc = 0.9*0 + 0.1*1 = 0.1; p = -0.1 / (sqrt(0.1) + 1e-8).
  const double want_acc = (1.0 - 0.9) * 1.0;
  const double want_p = -0.1 * 1.0 / (std::sqrt(want_acc) + 1e-8);
  CHECK(acc(0, 0) == want_acc);
  CHECK(p(0, 0) == want_p);
  CHECK(std::abs(p(0, 0) - (-0.31623)) < 1e-5);
}

TEST_CASE("rmsprop rejects shape mismatches") {
  Matrix p = Matrix::Zero(2, 2), g = Matrix::Zero(2, 3), acc = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(rmsprop_update(p, g, acc, 0.1, 0.9, 1e-8), InvalidShapeError);
}

TEST_CASE("seeded optimizer trajectories are bit-identical") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    DenseLayer layer = make_layer(3, 3, Activation::kLinear, rng);
    std::vector<DenseLayer*> layers{&layer};
    RmspropOptimizer opt(0.01, 0.9, 1e-8);
    for (int step = 0; step < 10; ++step) {
      std::vector<LayerGrad> grads{
          LayerGrad{rng.gaussian(3, 3, 1.0), rng.gaussian(3, 1, 1.0).col(0)}};
      opt.step(layers, grads);
    }
    return layer;
  };
  const DenseLayer a = run(77);
  const DenseLayer b = run(77);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
}

TEST_CASE("rmsprop accumulator stays nonnegative") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    DenseLayer layer = make_layer(2, 4, Activation::kLinear, rng);
    std::vector<DenseLayer*> layers{&layer};
    RmspropOptimizer opt(0.05, 0.9, 1e-8);
    for (int step = 0; step < 15; ++step) {
      std::vector<LayerGrad> grads{
          LayerGrad{rng.gaussian(2, 4, 3.0), rng.gaussian(2, 1, 3.0).col(0)}};
      opt.step(layers, grads);
    }
    CHECK((opt.state().acc[0].weights.array() >= 0.0).all());
    CHECK((opt.state().acc[0].bias.array() >= 0.0).all());
    CHECK(opt.state().steps == 15);
  }
}

TEST_CASE("activation invariants") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = rng.gaussian(6, 3, 2.0);
    const Matrix r = apply_activation(Activation::kRelu, x);
    CHECK(apply_activation(Activation::kRelu, r) == r);  // idempotent
    const Matrix s = apply_activation(Activation::kSigmoid, x);
    CHECK((s.array() > 0.0).all());
    CHECK((s.array() < 1.0).all());
    const Matrix sm = apply_activation(Activation::kSoftmax, x);
    for (Index c = 0; c < sm.cols(); ++c) {
      CHECK(std::abs(sm.col(c).sum() - 1.0) < 1e-12);
    }
  }
}
