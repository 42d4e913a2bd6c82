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
#include <functional>
#include <vector>

#include "milvae/nn.hpp"
#include "milvae/rng.hpp"
#include "milvae/types.hpp"

namespace milvae {

// Reverse-mode tape over dense batches. Every op records the forward value
// plus a closure that pushes adjoints to its parents; backward() runs the
// closures in reverse recording order, so gradients are exact (no
// approximation anywhere on the tape).
//
// Convention: a node value is a Matrix whose columns are batch samples.
// Scalar losses are 1x1; per-sample loss rows are 1xB.
//
// Parameter gradients accumulate into caller-owned LayerGrad buffers (pass
// nullptr to treat a layer as frozen). Buffers must be pre-sized
// (zero_grad_like) and outlive backward().
class Tape {
 public:
  using ValueId = std::int32_t;

  // Leaf with no gradient tracking.
  ValueId constant(Matrix value);

  // Leaf whose adjoint is kept, retrievable via gradient() after backward().
  ValueId input(Matrix value);

  // W x + b, bias broadcast over columns.
  ValueId affine(const DenseLayer& layer, LayerGrad* grad, ValueId x);

  ValueId activation(Activation activation, ValueId x);

  // affine followed by the layer's activation.
  ValueId dense(const DenseLayer& layer, LayerGrad* grad, ValueId x);

  // Inverted dropout; identity (no node) in infer mode or at rate 0. The mask
  // is drawn once at record time and reused by backward.
  ValueId dropout(ValueId x, double rate, Mode mode, Rng& rng);

  // Stacks a on top of b ([a; b]); column counts must agree.
  ValueId concat_rows(ValueId a, ValueId b);

  // mu + exp(logvar/2) .* noise with noise held constant.
  ValueId reparameterize(ValueId mu, ValueId logvar, Matrix noise);

  ValueId add(ValueId a, ValueId b);
  ValueId scale(ValueId x, double factor);
  ValueId cwise_product(ValueId a, ValueId b);

  // Sum of all entries -> 1x1.
  ValueId sum_all(ValueId x);

  // Per-column KL(N(mu, diag(exp(logvar))) || N(0, I)) -> 1xB.
  ValueId kl_to_prior_rows(ValueId mu, ValueId logvar);

  // Per-column Bernoulli cross-entropy of xhat against a constant target,
  // xhat clipped to [1e-7, 1 - 1e-7] before the logs -> 1xB.
  ValueId bernoulli_ce_rows(Matrix target, ValueId xhat);

  // Per-column -log(probs(row_of_col[b], b)) -> 1xB. Two-class softmax output
  // plus this op is the classifier's binary cross-entropy.
  ValueId pick_neg_log_rows(ValueId probs, std::vector<int> row_of_col);

  const Matrix& value(ValueId id) const;

  // Seeds d(loss)/d(loss) = seed and sweeps the tape backwards. loss must be
  // 1x1. Throws NoGraphError when nothing was recorded.
  void backward(ValueId loss, double seed = 1.0);

  // Adjoint of a node after backward(); zero matrix if the node was not
  // reached.
  Matrix gradient(ValueId id) const;

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Matrix value;
    // Receives this node's adjoint; pushes to parents via accumulate().
    std::function<void(Tape&, const Matrix&)> back;
  };

  ValueId push(Matrix value, std::function<void(Tape&, const Matrix&)> back);
  void accumulate(ValueId id, const Matrix& adj);
  const Matrix& checked_value(ValueId id, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;

  static constexpr double kCeClip = 1e-7;
};

}  // namespace milvae
