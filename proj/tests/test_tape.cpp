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
#include "milvae/gradcheck.hpp"
#include "milvae/selfcheck.hpp"
#include "milvae/tape.hpp"
#include "oracles.hpp"

using namespace milvae;

TEST_CASE("backward on an empty tape raises NoGraphError") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(0), NoGraphError);
}

TEST_CASE("gradient before backward raises NoGraphError") {
  Tape tape;
  const Tape::ValueId x = tape.input(Matrix::Ones(1, 1));
  CHECK_THROWS_AS(tape.gradient(x), NoGraphError);
}

TEST_CASE("d(w^2)/dw = 2w") {
  // loss = w^2 expressed as (w*x)*(w*x) with x = 1; w = 3 gives gradient 6.
  DenseLayer layer;
  layer.weights = Matrix::Constant(1, 1, 3.0);
  layer.bias = Vector::Zero(1);
  layer.activation = Activation::kLinear;
  LayerGrad grad = zero_grad_like(layer);

  Tape tape;
  const Tape::ValueId y = tape.dense(layer, &grad, tape.constant(Matrix::Ones(1, 1)));
  tape.backward(tape.sum_all(tape.cwise_product(y, y)));
  CHECK(std::abs(grad.weights(0, 0) - 6.0) < 1e-12);
}

TEST_CASE("d sigmoid(wx)/dw at w=0, x=1 is 1/4") {
  DenseLayer layer;
  layer.weights = Matrix::Zero(1, 1);
  layer.bias = Vector::Zero(1);
  layer.activation = Activation::kSigmoid;
  LayerGrad grad = zero_grad_like(layer);

  Tape tape;
  const Tape::ValueId y = tape.dense(layer, &grad, tape.constant(Matrix::Ones(1, 1)));
  tape.backward(tape.sum_all(y));
  CHECK(std::abs(grad.weights(0, 0) - 0.25) < 1e-15);
}

TEST_CASE("two-layer net: every parameter matches central differences") {
  Rng rng(2024);
  DenseLayer l1 = make_layer(4, 3, Activation::kRelu, rng);
  DenseLayer l2 = make_layer(2, 4, Activation::kSigmoid, rng);
  l1.weights = rng.gaussian(4, 3, 0.7);
  l1.bias = rng.gaussian(4, 1, 0.2).col(0);
  l2.weights = rng.gaussian(2, 4, 0.7);
  l2.bias = rng.gaussian(2, 1, 0.2).col(0);
  const Matrix x = rng.gaussian(3, 2, 1.0);
  const Matrix c = rng.gaussian(2, 2, 1.0);

  LayerGrad g1 = zero_grad_like(l1), g2 = zero_grad_like(l2);
  Tape tape;
  const Tape::ValueId h = tape.dense(l1, &g1, tape.constant(x));
  const Tape::ValueId y = tape.dense(l2, &g2, h);
  tape.backward(tape.sum_all(tape.cwise_product(y, tape.constant(c))));

  std::vector<DenseLayer*> layers{&l1, &l2};
  std::vector<const LayerGrad*> grads{&g1, &g2};
  auto loss = [&]() { return forward(l2, forward(l1, x)).cwiseProduct(c).sum(); };
  const GradCheckReport r = finite_difference_check(layers, grads, loss, 1e-5);
  CHECK(r.entries_checked == 4 * 3 + 4 + 2 * 4 + 2);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("input gradients flow through mixed ops") {
  Rng rng(77);
  Matrix x = rng.gaussian(3, 2, 1.0);
  const Matrix noise = rng.gaussian(3, 2, 1.0);
  Matrix lv = rng.gaussian(3, 2, 0.5);

  auto build = [&](Tape& tape, Tape::ValueId& xin, Tape::ValueId& lvin) {
    xin = tape.input(x);
    lvin = tape.input(lv);
    const Tape::ValueId z = tape.reparameterize(xin, lvin, noise);
    const Tape::ValueId kl = tape.kl_to_prior_rows(xin, lvin);
    const Tape::ValueId s = tape.activation(Activation::kSigmoid, z);
    Matrix target = Matrix::Constant(3, 2, 0.3);
    const Tape::ValueId ce = tape.bernoulli_ce_rows(std::move(target), s);
    return tape.sum_all(tape.add(tape.scale(kl, 0.5), ce));
  };

  Tape tape;
  Tape::ValueId xin, lvin;
  const Tape::ValueId loss = build(tape, xin, lvin);
  tape.backward(loss);
  const Matrix dx = tape.gradient(xin);
  const Matrix dlv = tape.gradient(lvin);

  auto eval = [&]() {
    Tape t;
    Tape::ValueId a, b;
    const Tape::ValueId l = build(t, a, b);
    return t.value(l)(0, 0);
  };
  CHECK(oracle::fd_input_max_rel_err(eval, x, dx) < 1e-4);
  CHECK(oracle::fd_input_max_rel_err(eval, lv, dlv) < 1e-4);
}

TEST_CASE("dropout, concat and pick_neg_log gradients match finite differences") {
  Rng rng(91);
  DenseLayer head = make_layer(3, 4, Activation::kSoftmax, rng);
  head.weights = rng.gaussian(3, 4, 0.8);
  head.bias = rng.gaussian(3, 1, 0.1).col(0);
  Matrix a = rng.gaussian(2, 2, 1.0);
  Matrix b = rng.gaussian(2, 2, 1.0);
  const std::vector<int> targets{0, 2};
  const std::uint64_t mask_seed = 1234;

  auto build = [&](Tape& tape, Tape::ValueId& ain, Tape::ValueId& bin) {
    Rng mask_rng(mask_seed);
    ain = tape.input(a);
    bin = tape.input(b);
    const Tape::ValueId cat = tape.concat_rows(ain, bin);
    const Tape::ValueId dropped = tape.dropout(cat, 0.25, Mode::kTrain, mask_rng);
    const Tape::ValueId probs = tape.dense(head, nullptr, dropped);
    return tape.sum_all(tape.pick_neg_log_rows(probs, targets));
  };

  Tape tape;
  Tape::ValueId ain, bin;
  tape.backward(build(tape, ain, bin));
  const Matrix da = tape.gradient(ain);
  const Matrix db = tape.gradient(bin);

  auto eval = [&]() {
    Tape t;
    Tape::ValueId p, q;
    const Tape::ValueId l = build(t, p, q);
    return t.value(l)(0, 0);
  };
  CHECK(oracle::fd_input_max_rel_err(eval, a, da) < 1e-4);
  CHECK(oracle::fd_input_max_rel_err(eval, b, db) < 1e-4);
}

TEST_CASE("per-layer-kind gradient suites stay under tolerance") {
  // A slice of the acceptance battery; acceptance runs 100 configs per kind.
  for (const Activation act :
       {Activation::kLinear, Activation::kRelu, Activation::kSigmoid, Activation::kSoftmax}) {
    const GradCheckReport r = gradcheck_layer_suite(act, 10, 999);
    CHECK(r.max_rel_err < 1e-4);
    CHECK(r.entries_checked > 0);
  }
}

TEST_CASE("backward requires a scalar loss node") {
  Tape tape;
  const Tape::ValueId x = tape.input(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(x), InvalidShapeError);
}
