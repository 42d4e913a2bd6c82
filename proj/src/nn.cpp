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

#include "milvae/nn.hpp"

#include <string>

#include "milvae/errors.hpp"

namespace milvae {

Matrix init_weights(Index out_dim, Index in_dim, Rng& rng) {
  if (out_dim < 1 || in_dim < 1) {
    throw InvalidShapeError("init_weights: dims must be >= 1, got " + std::to_string(out_dim) +
                            "x" + std::to_string(in_dim));
  }
  return rng.gaussian(out_dim, in_dim, kInitStdDev);
}

DenseLayer make_layer(Index out_dim, Index in_dim, Activation activation, Rng& rng) {
  DenseLayer layer;
  layer.weights = init_weights(out_dim, in_dim, rng);
  layer.bias = Vector::Zero(out_dim);
  layer.activation = activation;
  return layer;
}

LayerGrad zero_grad_like(const DenseLayer& layer) {
  return LayerGrad{Matrix::Zero(layer.out_dim(), layer.in_dim()), Vector::Zero(layer.out_dim())};
}

void set_zero(LayerGrad& grad) {
  grad.weights.setZero();
  grad.bias.setZero();
}

Matrix apply_activation(Activation activation, const Matrix& pre) {
  switch (activation) {
    case Activation::kLinear:
      return pre;
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kSigmoid:
      return ((-pre.array()).exp() + 1.0).inverse().matrix();
    case Activation::kSoftmax: {
      Matrix out(pre.rows(), pre.cols());
      for (Index c = 0; c < pre.cols(); ++c) {
        const Vector shifted = pre.col(c).array() - pre.col(c).maxCoeff();
        const Vector e = shifted.array().exp();
        out.col(c) = e / e.sum();
      }
      return out;
    }
  }
  throw InvalidInputError("apply_activation: unknown activation");
}

namespace {

void check_forward_shape(const DenseLayer& layer, Index x_rows) {
  if (layer.weights.rows() != layer.bias.size()) {
    throw InvalidShapeError("forward: layer bias length does not match weight rows");
  }
  if (x_rows != layer.in_dim()) {
    throw InvalidShapeError("forward: input length " + std::to_string(x_rows) +
                            " != layer in_dim " + std::to_string(layer.in_dim()));
  }
}

}  // namespace

Vector forward(const DenseLayer& layer, const Vector& x) {
  check_forward_shape(layer, x.size());
  const Vector pre = layer.weights * x + layer.bias;
  return apply_activation(layer.activation, pre);
}

Matrix forward(const DenseLayer& layer, const Matrix& x) {
  check_forward_shape(layer, x.rows());
  Matrix pre = layer.weights * x;
  pre.colwise() += layer.bias;
  return apply_activation(layer.activation, pre);
}

namespace {

void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidHyperparameterError("dropout: rate must lie in [0,1), got " +
                                     std::to_string(rate));
  }
}

}  // namespace

Matrix dropout(const Matrix& x, double rate, Mode mode, Rng& rng) {
  check_dropout_rate(rate);
  if (mode == Mode::kInfer || rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  Matrix out(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    for (Index r = 0; r < x.rows(); ++r) {
      out(r, c) = rng.uniform() < rate ? 0.0 : x(r, c) * scale;
    }
  }
  return out;
}

Vector dropout(const Vector& x, double rate, Mode mode, Rng& rng) {
  const Matrix out = dropout(Matrix(x), rate, mode, rng);
  return out.col(0);
}

void rmsprop_update(Matrix& params, const Matrix& grad, Matrix& acc, double lr, double rho,
                    double eps) {
  if (params.rows() != grad.rows() || params.cols() != grad.cols() ||
      params.rows() != acc.rows() || params.cols() != acc.cols()) {
    throw InvalidShapeError("rmsprop_update: params/grad/acc shapes disagree");
  }
  acc = rho * acc + (1.0 - rho) * grad.cwiseProduct(grad);
  params.array() -= lr * grad.array() / (acc.array().sqrt() + eps);
}

void rmsprop_update(Vector& params, const Vector& grad, Vector& acc, double lr, double rho,
                    double eps) {
  if (params.size() != grad.size() || params.size() != acc.size()) {
    throw InvalidShapeError("rmsprop_update: params/grad/acc shapes disagree");
  }
  acc = rho * acc + (1.0 - rho) * grad.cwiseProduct(grad);
  params.array() -= lr * grad.array() / (acc.array().sqrt() + eps);
}

void RmspropOptimizer::step(const std::vector<DenseLayer*>& layers,
                            const std::vector<LayerGrad>& grads) {
  if (layers.size() != grads.size()) {
    throw InvalidShapeError("RmspropOptimizer::step: layer/grad count mismatch");
  }
  if (state_.acc.empty()) {
    state_.acc.reserve(layers.size());
    for (const DenseLayer* layer : layers) state_.acc.push_back(zero_grad_like(*layer));
    if (momentum_ > 0.0) {
      for (const DenseLayer* layer : layers) state_.velocity.push_back(zero_grad_like(*layer));
    }
  }
  if (state_.acc.size() != layers.size()) {
    throw InvalidShapeError("RmspropOptimizer::step: accumulator count mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (momentum_ > 0.0) {
      LayerGrad& acc = state_.acc[i];
      LayerGrad& vel = state_.velocity[i];
      acc.weights = rho_ * acc.weights + (1.0 - rho_) * grads[i].weights.cwiseProduct(grads[i].weights);
      acc.bias = rho_ * acc.bias + (1.0 - rho_) * grads[i].bias.cwiseProduct(grads[i].bias);
      vel.weights = momentum_ * vel.weights +
                    (lr_ * grads[i].weights.array() / (acc.weights.array().sqrt() + eps_)).matrix();
      vel.bias = momentum_ * vel.bias +
                 (lr_ * grads[i].bias.array() / (acc.bias.array().sqrt() + eps_)).matrix();
      layers[i]->weights -= vel.weights;
      layers[i]->bias -= vel.bias;
    } else {
      rmsprop_update(layers[i]->weights, grads[i].weights, state_.acc[i].weights, lr_, rho_,
                     eps_);
      rmsprop_update(layers[i]->bias, grads[i].bias, state_.acc[i].bias, lr_, rho_, eps_);
    }
  }
  ++state_.steps;
}

}  // namespace milvae
