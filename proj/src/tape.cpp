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

#include "milvae/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "milvae/errors.hpp"

namespace milvae {

Tape::ValueId Tape::push(Matrix value, std::function<void(Tape&, const Matrix&)> back) {
  nodes_.push_back(Node{std::move(value), std::move(back)});
  return static_cast<ValueId>(nodes_.size() - 1);
}

const Matrix& Tape::checked_value(ValueId id, const char* op) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw NoGraphError(std::string(op) + ": value id " + std::to_string(id) +
                       " is not on this tape");
  }
  return nodes_[static_cast<std::size_t>(id)].value;
}

const Matrix& Tape::value(ValueId id) const { return checked_value(id, "value"); }

void Tape::accumulate(ValueId id, const Matrix& adj) {
  Matrix& slot = adjoints_[static_cast<std::size_t>(id)];
  if (slot.size() == 0) {
    slot = adj;
  } else {
    slot += adj;
  }
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
}

Tape::ValueId Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Tape::ValueId Tape::input(Matrix value) {
  // Adjoint retention is all that distinguishes an input from a constant; the
  // backward sweep keeps adjoints for every node it reaches.
  return push(std::move(value), nullptr);
}

Tape::ValueId Tape::affine(const DenseLayer& layer, LayerGrad* grad, ValueId x) {
  const Matrix& xv = checked_value(x, "affine");
  if (xv.rows() != layer.in_dim()) {
    throw InvalidShapeError("affine: input rows " + std::to_string(xv.rows()) +
                            " != layer in_dim " + std::to_string(layer.in_dim()));
  }
  if (grad != nullptr &&
      (grad->weights.rows() != layer.out_dim() || grad->weights.cols() != layer.in_dim() ||
       grad->bias.size() != layer.out_dim())) {
    throw InvalidShapeError("affine: gradient buffer shape does not match layer");
  }
  Matrix pre = layer.weights * xv;
  pre.colwise() += layer.bias;
  const Matrix* w = &layer.weights;
  return push(std::move(pre), [grad, w, x](Tape& t, const Matrix& adj) {
    if (grad != nullptr) {
      grad->weights.noalias() += adj * t.nodes_[static_cast<std::size_t>(x)].value.transpose();
      grad->bias += adj.rowwise().sum();
    }
    t.accumulate(x, w->transpose() * adj);
  });
}

Tape::ValueId Tape::activation(Activation activation, ValueId x) {
  const Matrix& xv = checked_value(x, "activation");
  Matrix out = apply_activation(activation, xv);
  switch (activation) {
    case Activation::kLinear:
      return push(std::move(out),
                  [x](Tape& t, const Matrix& adj) { t.accumulate(x, adj); });
    case Activation::kRelu: {
      ValueId id = push(std::move(out), nullptr);
      nodes_.back().back = [x, id](Tape& t, const Matrix& adj) {
        const Matrix& v = t.nodes_[static_cast<std::size_t>(id)].value;
        t.accumulate(x, (v.array() > 0.0).select(adj, Matrix::Zero(adj.rows(), adj.cols())));
      };
      return id;
    }
    case Activation::kSigmoid: {
      ValueId id = push(std::move(out), nullptr);
      nodes_.back().back = [x, id](Tape& t, const Matrix& adj) {
        const Matrix& s = t.nodes_[static_cast<std::size_t>(id)].value;
        t.accumulate(x, (adj.array() * s.array() * (1.0 - s.array())).matrix());
      };
      return id;
    }
    case Activation::kSoftmax: {
      ValueId id = push(std::move(out), nullptr);
      nodes_.back().back = [x, id](Tape& t, const Matrix& adj) {
        const Matrix& s = t.nodes_[static_cast<std::size_t>(id)].value;
        Matrix dx(s.rows(), s.cols());
        for (Index c = 0; c < s.cols(); ++c) {
          const double dot = s.col(c).dot(adj.col(c));
          dx.col(c) = s.col(c).cwiseProduct(adj.col(c).array().matrix() -
                                            Vector::Constant(s.rows(), dot));
        }
        t.accumulate(x, dx);
      };
      return id;
    }
  }
  throw InvalidInputError("activation: unknown activation");
}

Tape::ValueId Tape::dense(const DenseLayer& layer, LayerGrad* grad, ValueId x) {
  return activation(layer.activation, affine(layer, grad, x));
}

Tape::ValueId Tape::dropout(ValueId x, double rate, Mode mode, Rng& rng) {
  const Matrix& xv = checked_value(x, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidHyperparameterError("dropout: rate must lie in [0,1), got " +
                                     std::to_string(rate));
  }
  if (mode == Mode::kInfer || rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  Matrix mask(xv.rows(), xv.cols());
  for (Index c = 0; c < xv.cols(); ++c) {
    for (Index r = 0; r < xv.rows(); ++r) {
      mask(r, c) = rng.uniform() < rate ? 0.0 : scale;
    }
  }
  return push(xv.cwiseProduct(mask), [x, mask](Tape& t, const Matrix& adj) {
    t.accumulate(x, adj.cwiseProduct(mask));
  });
}

Tape::ValueId Tape::concat_rows(ValueId a, ValueId b) {
  const Matrix& av = checked_value(a, "concat_rows");
  const Matrix& bv = checked_value(b, "concat_rows");
  if (av.cols() != bv.cols()) {
    throw InvalidShapeError("concat_rows: column counts disagree");
  }
  Matrix out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  const Index top = av.rows();
  const Index bottom = bv.rows();
  return push(std::move(out), [a, b, top, bottom](Tape& t, const Matrix& adj) {
    t.accumulate(a, adj.topRows(top));
    t.accumulate(b, adj.bottomRows(bottom));
  });
}

Tape::ValueId Tape::reparameterize(ValueId mu, ValueId logvar, Matrix noise) {
  const Matrix& m = checked_value(mu, "reparameterize");
  const Matrix& lv = checked_value(logvar, "reparameterize");
  if (m.rows() != lv.rows() || m.cols() != lv.cols() || m.rows() != noise.rows() ||
      m.cols() != noise.cols()) {
    throw InvalidShapeError("reparameterize: mu/logvar/noise shapes disagree");
  }
  // sigma .* eps is both the forward offset and half the logvar adjoint.
  Matrix offset = (0.5 * lv.array()).exp().matrix().cwiseProduct(noise);
  Matrix z = m + offset;
  return push(std::move(z), [mu, logvar, offset](Tape& t, const Matrix& adj) {
    t.accumulate(mu, adj);
    t.accumulate(logvar, 0.5 * adj.cwiseProduct(offset));
  });
}

Tape::ValueId Tape::add(ValueId a, ValueId b) {
  const Matrix& av = checked_value(a, "add");
  const Matrix& bv = checked_value(b, "add");
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw InvalidShapeError("add: shapes disagree");
  }
  return push(av + bv, [a, b](Tape& t, const Matrix& adj) {
    t.accumulate(a, adj);
    t.accumulate(b, adj);
  });
}

Tape::ValueId Tape::scale(ValueId x, double factor) {
  const Matrix& xv = checked_value(x, "scale");
  return push(factor * xv, [x, factor](Tape& t, const Matrix& adj) {
    t.accumulate(x, factor * adj);
  });
}

Tape::ValueId Tape::cwise_product(ValueId a, ValueId b) {
  const Matrix& av = checked_value(a, "cwise_product");
  const Matrix& bv = checked_value(b, "cwise_product");
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw InvalidShapeError("cwise_product: shapes disagree");
  }
  return push(av.cwiseProduct(bv), [a, b](Tape& t, const Matrix& adj) {
    t.accumulate(a, adj.cwiseProduct(t.nodes_[static_cast<std::size_t>(b)].value));
    t.accumulate(b, adj.cwiseProduct(t.nodes_[static_cast<std::size_t>(a)].value));
  });
}

Tape::ValueId Tape::sum_all(ValueId x) {
  const Matrix& xv = checked_value(x, "sum_all");
  Matrix out(1, 1);
  out(0, 0) = xv.sum();
  const Index rows = xv.rows();
  const Index cols = xv.cols();
  return push(std::move(out), [x, rows, cols](Tape& t, const Matrix& adj) {
    t.accumulate(x, Matrix::Constant(rows, cols, adj(0, 0)));
  });
}

Tape::ValueId Tape::kl_to_prior_rows(ValueId mu, ValueId logvar) {
  const Matrix& m = checked_value(mu, "kl_to_prior_rows");
  const Matrix& lv = checked_value(logvar, "kl_to_prior_rows");
  if (m.rows() != lv.rows() || m.cols() != lv.cols()) {
    throw InvalidShapeError("kl_to_prior_rows: mu/logvar shapes disagree");
  }
  Matrix out(1, m.cols());
  out.row(0) =
      0.5 * (m.array().square() + lv.array().exp() - lv.array() - 1.0).colwise().sum();
  return push(std::move(out), [mu, logvar](Tape& t, const Matrix& adj) {
    const Matrix& mv = t.nodes_[static_cast<std::size_t>(mu)].value;
    const Matrix& lvv = t.nodes_[static_cast<std::size_t>(logvar)].value;
    // Broadcast each column's scalar adjoint over that column.
    Matrix dmu = mv;
    Matrix dlv = (0.5 * (lvv.array().exp() - 1.0)).matrix();
    for (Index c = 0; c < mv.cols(); ++c) {
      dmu.col(c) *= adj(0, c);
      dlv.col(c) *= adj(0, c);
    }
    t.accumulate(mu, dmu);
    t.accumulate(logvar, dlv);
  });
}

Tape::ValueId Tape::bernoulli_ce_rows(Matrix target, ValueId xhat) {
  const Matrix& xv = checked_value(xhat, "bernoulli_ce_rows");
  if (target.rows() != xv.rows() || target.cols() != xv.cols()) {
    throw InvalidShapeError("bernoulli_ce_rows: target/xhat shapes disagree");
  }
  if ((target.array() < 0.0).any() || (target.array() > 1.0).any()) {
    throw InvalidInputError("bernoulli_ce_rows: target entries must lie in [0,1]");
  }
  const double lo = kCeClip;
  const double hi = 1.0 - kCeClip;
  Matrix clipped = xv.cwiseMax(lo).cwiseMin(hi);
  Matrix out(1, xv.cols());
  out.row(0) = -(target.array() * clipped.array().log() +
                 (1.0 - target.array()) * (1.0 - clipped.array()).log())
                    .colwise()
                    .sum();
  return push(std::move(out),
              [xhat, target = std::move(target), clipped = std::move(clipped), lo,
               hi](Tape& t, const Matrix& adj) {
                const Matrix& raw = t.nodes_[static_cast<std::size_t>(xhat)].value;
                // d/dc of the cross entropy is (c - t) / (c (1 - c)); the clip
                // contributes zero gradient where it is active.
                Matrix dx = ((clipped.array() - target.array()) /
                             (clipped.array() * (1.0 - clipped.array())))
                                .matrix();
                for (Index c = 0; c < dx.cols(); ++c) {
                  for (Index r = 0; r < dx.rows(); ++r) {
                    if (raw(r, c) < lo || raw(r, c) > hi) dx(r, c) = 0.0;
                  }
                  dx.col(c) *= adj(0, c);
                }
                t.accumulate(xhat, dx);
              });
}

Tape::ValueId Tape::pick_neg_log_rows(ValueId probs, std::vector<int> row_of_col) {
  const Matrix& p = checked_value(probs, "pick_neg_log_rows");
  if (static_cast<Index>(row_of_col.size()) != p.cols()) {
    throw InvalidShapeError("pick_neg_log_rows: one target row per column required");
  }
  for (int r : row_of_col) {
    if (r < 0 || r >= p.rows()) {
      throw InvalidShapeError("pick_neg_log_rows: target row out of range");
    }
  }
  constexpr double kTiny = 1e-12;
  Matrix out(1, p.cols());
  for (Index c = 0; c < p.cols(); ++c) {
    out(0, c) = -std::log(std::max(p(row_of_col[static_cast<std::size_t>(c)], c), kTiny));
  }
  return push(std::move(out),
              [probs, row_of_col = std::move(row_of_col)](Tape& t, const Matrix& adj) {
                const Matrix& p = t.nodes_[static_cast<std::size_t>(probs)].value;
                Matrix dp = Matrix::Zero(p.rows(), p.cols());
                for (Index c = 0; c < p.cols(); ++c) {
                  const double v = p(row_of_col[static_cast<std::size_t>(c)], c);
                  if (v > kTiny) {
                    dp(row_of_col[static_cast<std::size_t>(c)], c) = -adj(0, c) / v;
                  }
                }
                t.accumulate(probs, dp);
              });
}

void Tape::backward(ValueId loss, double seed) {
  if (nodes_.empty()) {
    throw NoGraphError("backward: nothing recorded on the tape");
  }
  const Matrix& lv = checked_value(loss, "backward");
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw InvalidShapeError("backward: loss node must be 1x1");
  }
  adjoints_.assign(nodes_.size(), Matrix());
  adjoints_[static_cast<std::size_t>(loss)] = Matrix::Constant(1, 1, seed);
  for (ValueId id = loss; id >= 0; --id) {
    const Matrix& adj = adjoints_[static_cast<std::size_t>(id)];
    if (adj.size() == 0) continue;
    const auto& back = nodes_[static_cast<std::size_t>(id)].back;
    if (back) back(*this, adj);
  }
}

Matrix Tape::gradient(ValueId id) const {
  const Matrix& v = checked_value(id, "gradient");
  if (adjoints_.size() != nodes_.size()) {
    throw NoGraphError("gradient: backward() has not run on this tape");
  }
  const Matrix& adj = adjoints_[static_cast<std::size_t>(id)];
  if (adj.size() == 0) return Matrix::Zero(v.rows(), v.cols());
  return adj;
}

}  // namespace milvae
