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

#include "milvae/bag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include "milvae/errors.hpp"
#include "milvae/tape.hpp"
#include "milvae/vae.hpp"

namespace milvae {

BagFeature pool_bag(const Matrix& latents, int label, std::string bag_id) {
  if (latents.cols() < 1) {
    throw EmptyBagError("pool_bag: a bag needs at least one instance");
  }
  const Index nz = latents.rows();
  const double m = static_cast<double>(latents.cols());
  BagFeature f;
  f.label = label;
  f.bag_id = std::move(bag_id);
  f.values.resize(4 * nz);
  f.values.segment(0, nz) = latents.rowwise().minCoeff();
  f.values.segment(nz, nz) = latents.rowwise().maxCoeff();
  const Vector mean = latents.rowwise().sum() / m;
  f.values.segment(2 * nz, nz) = mean;
  const Vector var = (latents.colwise() - mean).array().square().rowwise().sum() / m;
  f.values.segment(3 * nz, nz) = var.cwiseMax(0.0).cwiseSqrt();
  return f;
}

std::vector<BagFeature> pool_dataset(const MilModel& model, const MILDataset& raw) {
  std::vector<BagFeature> out;
  out.reserve(raw.bags.size());
  for (const auto& bag : raw.bags) {
    const Matrix mu = encode_mu(model.vae_pm, apply(model.normalizer, bag.instances));
    out.push_back(pool_bag(mu, bag.label, bag.id));
  }
  return out;
}

FeatureScaler fit_scaler(const std::vector<BagFeature>& train) {
  if (train.empty()) {
    throw InvalidInputError("fit_scaler: empty training set");
  }
  const Index dim = train.front().values.size();
  Vector mean = Vector::Zero(dim);
  for (const auto& f : train) mean += f.values;
  mean /= static_cast<double>(train.size());
  Vector var = Vector::Zero(dim);
  for (const auto& f : train) var += (f.values - mean).cwiseAbs2();
  var /= static_cast<double>(train.size());
  return FeatureScaler{std::move(mean), var.cwiseMax(0.0).cwiseSqrt()};
}

Vector standardize(const FeatureScaler& scaler, const Vector& values) {
  if (values.size() != scaler.mean.size()) {
    throw InvalidShapeError("feature scaler: dimension mismatch");
  }
  Vector out(values.size());
  for (Index i = 0; i < values.size(); ++i) {
    out(i) = scaler.stddev(i) < 1e-12 ? 0.0 : (values(i) - scaler.mean(i)) / scaler.stddev(i);
  }
  return out;
}

std::vector<BagFeature> standardize(const FeatureScaler& scaler,
                              const std::vector<BagFeature>& feats) {
  std::vector<BagFeature> out = feats;
  for (auto& f : out) f.values = standardize(scaler, f.values);
  return out;
}

int knn_predict(const std::vector<BagFeature>& train, const Vector& query, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > train.size()) {
    throw InvalidHyperparameterError("knn_predict: need 1 <= k <= |train|, got k=" +
                                     std::to_string(k) + " with " +
                                     std::to_string(train.size()) + " points");
  }
  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].values.size() != query.size()) {
      throw InvalidShapeError("knn_predict: feature dimension mismatch");
    }
    dist[i] = {(train[i].values - query).squaredNorm(), i};
  }
  std::sort(dist.begin(), dist.end());  // ties break on index, deterministic
  int votes = 0;
  for (int i = 0; i < k; ++i) {
    votes += train[dist[static_cast<std::size_t>(i)].second].label == 1 ? 1 : -1;
  }
  if (votes > 0) return 1;
  if (votes < 0) return -1;
  return train[dist[0].second].label;
}

namespace {

void check_two_classes(const std::vector<BagFeature>& train, const char* who) {
  bool pos = false, neg = false;
  for (const auto& f : train) {
    (f.label == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) {
    throw DegenerateTrainingError(std::string(who) + ": training set has a single class");
  }
}

}  // namespace

NnClassifier nn_fit(const std::vector<BagFeature>& train, const NnClassifierConfig& config) {
  if (train.empty()) throw DegenerateTrainingError("nn_fit: empty training set");
  check_two_classes(train, "nn_fit");
  if (config.batch_size < 1 || config.epochs < 1) {
    throw InvalidHyperparameterError("nn_fit: epochs and batch_size must be >= 1");
  }

  const Index dim = train.front().values.size();
  Rng rng(config.seed);
  NnClassifier clf;
  int in = static_cast<int>(dim);
  for (int h : config.hidden) {
    clf.layers.push_back(make_layer(h, in, Activation::kRelu, rng));
    in = h;
  }
  clf.layers.push_back(make_layer(2, in, Activation::kSoftmax, rng));

  std::vector<LayerGrad> grads;
  std::vector<DenseLayer*> layers;
  for (auto& l : clf.layers) {
    grads.push_back(zero_grad_like(l));
    layers.push_back(&l);
  }
  RmspropOptimizer opt(config.learning_rate, config.rho, 1e-8);

  const Index n = static_cast<Index>(train.size());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index len = std::min<Index>(config.batch_size, n - start);
      Matrix xb(dim, len);
      std::vector<int> targets(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        const BagFeature& f = train[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
        xb.col(i) = f.values;
        targets[static_cast<std::size_t>(i)] = f.label == 1 ? 1 : 0;
      }
      Tape tape;
      for (auto& g : grads) set_zero(g);
      Tape::ValueId h = tape.constant(xb);
      for (std::size_t li = 0; li < clf.layers.size(); ++li) {
        h = tape.dense(clf.layers[li], &grads[li], h);
      }
      const Tape::ValueId ce = tape.pick_neg_log_rows(h, targets);
      const Tape::ValueId loss =
          tape.scale(tape.sum_all(ce), 1.0 / static_cast<double>(len));
      tape.backward(loss);
      opt.step(layers, grads);
    }
  }
  return clf;
}

int nn_predict(const NnClassifier& clf, const Vector& query) {
  Vector h = query;
  for (const auto& layer : clf.layers) h = forward(layer, h);
  return h(1) > h(0) ? 1 : -1;
}

namespace {

int stump_vote(const Stump& s, double value) {
  return value > s.threshold ? s.polarity : -s.polarity;
}

}  // namespace

StumpEnsemble adaboost_fit(const std::vector<BagFeature>& train, int rounds) {
  if (train.empty()) throw DegenerateTrainingError("adaboost_fit: empty training set");
  check_two_classes(train, "adaboost_fit");
  if (rounds < 1) throw InvalidHyperparameterError("adaboost_fit: rounds must be >= 1");

  const std::size_t n = train.size();
  const Index dim = train.front().values.size();

  // Sort orders per feature are reused by every round.
  std::vector<std::vector<std::size_t>> order(static_cast<std::size_t>(dim));
  for (Index f = 0; f < dim; ++f) {
    auto& idx = order[static_cast<std::size_t>(f)];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return train[a].values(f) < train[b].values(f);
    });
  }

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  StumpEnsemble ens;
  constexpr double kAlphaClip = 10.0;

  for (int round = 0; round < rounds; ++round) {
    Stump best;
    double best_eps = std::numeric_limits<double>::infinity();
    for (Index f = 0; f < dim; ++f) {
      const auto& idx = order[static_cast<std::size_t>(f)];
      // For threshold below all points, "predict +1 above" errs on every
      // negative; sweeping points to the left side flips their contribution.
      double w_pos = 0.0, w_neg = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        (train[i].label == 1 ? w_pos : w_neg) += w[i];
      }
      double eps_above = w_neg;  // polarity +1, everything on the +1 side
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t a = idx[i];
        eps_above += train[a].label == 1 ? w[a] : -w[a];
        const double va = train[a].values(f);
        const double vb = train[idx[i + 1]].values(f);
        if (va == vb) continue;  // not a distinct-value boundary
        const double thr = 0.5 * (va + vb);
        // polarity -1 is the complement classifier.
        const double candidates[2] = {eps_above, 1.0 - eps_above};
        for (int p = 0; p < 2; ++p) {
          const double eps = candidates[p];
          if (eps < best_eps - 1e-15) {
            best_eps = eps;
            best.feature = static_cast<int>(f);
            best.threshold = thr;
            best.polarity = p == 0 ? 1 : -1;
          }
        }
      }
    }
    if (!(best_eps < 0.5)) break;  // nothing better than chance; stop early

    // Prefix sums leave ~1e-17 residue on an actually-perfect stump.
    constexpr double kZeroEps = 1e-12;
    const double eps = std::max(best_eps, 0.0);
    double alpha;
    if (eps <= kZeroEps) {
      alpha = kAlphaClip;
    } else {
      alpha = std::min(0.5 * std::log((1.0 - eps) / eps), kAlphaClip);
    }
    best.alpha = alpha;
    ens.stumps.push_back(best);
    if (eps <= kZeroEps) break;  // perfect stump, training error is already zero

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int h = stump_vote(best, train[i].values(best.feature));
      const int y = train[i].label == 1 ? 1 : -1;
      w[i] *= std::exp(-alpha * y * h);
      total += w[i];
    }
    for (auto& wi : w) wi /= total;
  }
  if (ens.stumps.empty()) {
    throw DegenerateTrainingError("adaboost_fit: no stump beat chance in round 1");
  }
  return ens;
}

int adaboost_predict(const StumpEnsemble& ensemble, const Vector& query) {
  double score = 0.0;
  for (const auto& s : ensemble.stumps) {
    if (s.feature < 0 || s.feature >= query.size()) {
      throw InvalidShapeError("adaboost_predict: feature index out of range");
    }
    score += s.alpha * stump_vote(s, query(s.feature));
  }
  return score >= 0.0 ? 1 : -1;
}

Metrics metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw InvalidInputError("metrics: prediction/label lists must be nonempty and equal length");
  }
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] != 1 && predictions[i] != -1) {
      throw InvalidInputError("metrics: predictions must be -1 or +1");
    }
    if (labels[i] != 1 && labels[i] != -1) {
      throw InvalidInputError("metrics: labels must be -1 or +1");
    }
    if (predictions[i] == labels[i]) ++correct;
    if (predictions[i] == 1 && labels[i] == 1) ++tp;
    if (predictions[i] == 1 && labels[i] == -1) ++fp;
    if (predictions[i] == -1 && labels[i] == 1) ++fn;
  }
  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predictions.size());
  const double denom = static_cast<double>(2 * tp + fp + fn);
  m.f_score = denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(tp) / denom;
  m.error_rate = 1.0 - m.accuracy;
  return m;
}

void save_bag_features(const std::vector<BagFeature>& feats,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write bag feature table: " + path.string());
  const Index dim = feats.empty() ? 0 : feats.front().values.size();
  out << "bag_id,label";
  for (Index j = 0; j < dim; ++j) out << ",f_" << j;
  out << "\n";
  char buf[32];
  for (const auto& f : feats) {
    out << f.bag_id << "," << f.label;
    for (Index j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", f.values(j));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed while writing bag feature table: " + path.string());
}

}  // namespace milvae
