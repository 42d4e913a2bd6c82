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

#pragma once

#include <cstdint>
#include <vector>

#include "milvae/rng.hpp"
#include "milvae/types.hpp"

namespace milvae {

enum class Activation : std::uint8_t { kLinear = 0, kRelu = 1, kSigmoid = 2, kSoftmax = 3 };

// Weight initialization scale: zero-mean Gaussian with this standard
// deviation. Biases start at zero.
inline constexpr double kInitStdDev = 0.01;

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
  Activation activation = Activation::kLinear;

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
};

// Gradient (or squared-gradient accumulator) with the same shapes as a layer.
struct LayerGrad {
  Matrix weights;
  Vector bias;
};

// i.i.d. N(0, kInitStdDev^2) weight matrix. Throws InvalidShapeError on
// non-positive dims.
Matrix init_weights(Index out_dim, Index in_dim, Rng& rng);

DenseLayer make_layer(Index out_dim, Index in_dim, Activation activation, Rng& rng);

LayerGrad zero_grad_like(const DenseLayer& layer);
void set_zero(LayerGrad& grad);

// Applies an activation column-wise (softmax normalizes each column).
Matrix apply_activation(Activation activation, const Matrix& pre);

// activation(W x + b). Batch version treats each column of x as one sample.
// Dropout is not part of plain forward; see Tape::dropout and dropout() below.
Vector forward(const DenseLayer& layer, const Vector& x);
Matrix forward(const DenseLayer& layer, const Matrix& x);

// Inverted dropout: in train mode each entry survives with probability
// 1 - rate and is scaled by 1/(1 - rate); inference is the identity.
// rate outside [0, 1) -> InvalidHyperparameterError.
Vector dropout(const Vector& x, double rate, Mode mode, Rng& rng);
Matrix dropout(const Matrix& x, double rate, Mode mode, Rng& rng);

// One RMSprop update on a flat parameter block:
//   acc <- rho * acc + (1 - rho) * g.^2
//   p   <- p - lr * g ./ (sqrt(acc) + eps)
// Shapes of p, g, acc must agree.
void rmsprop_update(Matrix& params, const Matrix& grad, Matrix& acc, double lr, double rho,
                    double eps);
void rmsprop_update(Vector& params, const Vector& grad, Vector& acc, double lr, double rho,
                    double eps);

// Per-layer squared-gradient accumulators (and velocities, when momentum is
// enabled) plus a step counter.
struct OptimizerState {
  std::vector<LayerGrad> acc;
  std::vector<LayerGrad> velocity;  // only allocated when momentum > 0
  std::int64_t steps = 0;
};

// RMSprop over a set of layers. The accumulator list is created lazily on the
// first step and must then keep matching the layer list. With momentum = 0
// each update is exactly rmsprop_update; momentum > 0 adds a velocity on the
// preconditioned step (the Keras formulation):
//   v <- momentum * v + lr * g / (sqrt(acc) + eps);  p <- p - v
class RmspropOptimizer {
 public:
  explicit RmspropOptimizer(double lr = 1e-3, double rho = 0.9, double eps = 1e-8,
                            double momentum = 0.0)
      : lr_(lr), rho_(rho), eps_(eps), momentum_(momentum) {}

  void step(const std::vector<DenseLayer*>& layers, const std::vector<LayerGrad>& grads);

  const OptimizerState& state() const { return state_; }

 private:
  double lr_;
  double rho_;
  double eps_;
  double momentum_;
  OptimizerState state_;
};

}  // namespace milvae
