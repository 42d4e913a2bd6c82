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

#include "milvae/mil.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "milvae/errors.hpp"
#include "milvae/tape.hpp"

namespace milvae {

std::vector<DenseLayer*> MilModel::clf_layers() {
  std::vector<DenseLayer*> out;
  out.reserve(clf.size());
  for (auto& l : clf) out.push_back(&l);
  return out;
}

namespace {

void validate_config(const TrainConfig& cfg) {
  if (cfg.latent_dim < 1) throw InvalidHyperparameterError("config: latent_dim must be >= 1");
  if (cfg.batch_size < 1) throw InvalidHyperparameterError("config: batch_size must be >= 1");
  if (cfg.pair_multiplier < 1) {
    throw InvalidHyperparameterError("config: pair_multiplier must be >= 1");
  }
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw InvalidHyperparameterError("config: dropout_rate must lie in [0,1)");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw InvalidHyperparameterError("config: learning_rate must be > 0");
  }
  if (!(cfg.rho >= 0.0 && cfg.rho < 1.0)) {
    throw InvalidHyperparameterError("config: rho must lie in [0,1)");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw InvalidHyperparameterError("config: momentum must lie in [0,1)");
  }
  if (cfg.epochs < 0) throw InvalidHyperparameterError("config: epochs must be >= 0");
  if (cfg.clf_loss_weight < 0.0) {
    throw InvalidHyperparameterError("config: clf_loss_weight must be >= 0");
  }
}

// All negative-bag instances packed column-wise.
Matrix negative_instances(const MILDataset& ds) {
  Index n_neg = 0;
  for (const auto& b : ds.bags) {
    if (b.label != 1) n_neg += b.instances.cols();
  }
  Matrix negatives(ds.feature_dim, n_neg);
  Index in = 0;
  for (const auto& b : ds.bags) {
    if (b.label != 1) {
      negatives.middleCols(in, b.instances.cols()) = b.instances;
      in += b.instances.cols();
    }
  }
  return negatives;
}

double median_of(Vector v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  if (n == 0) throw InvalidInputError("median: empty");
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

Tape::ValueId record_clf(Tape& tape, const std::vector<DenseLayer>& clf,
                         std::vector<LayerGrad>* grads, Tape::ValueId h, Mode mode,
                         double dropout_rate, Rng& rng) {
  for (std::size_t i = 0; i < clf.size(); ++i) {
    h = tape.dense(clf[i], grads == nullptr ? nullptr : &(*grads)[i], h);
    if (i + 1 < clf.size()) h = tape.dropout(h, dropout_rate, mode, rng);
  }
  return h;
}

}  // namespace

JointGraph record_joint(Tape& tape, const MilModel& model, VaeGrads* g_pm, VaeGrads* g_neg,
                        std::vector<LayerGrad>* g_clf, const Matrix& x_any,
                        const Matrix& x_neg, const std::vector<int>& targets,
                        const Vector& weights, double clf_loss_weight, Mode mode,
                        double dropout_rate, Rng& rng) {
  if (x_any.cols() != x_neg.cols() ||
      x_any.cols() != static_cast<Index>(targets.size()) ||
      x_any.cols() != weights.size()) {
    throw InvalidShapeError("record_joint: batch sizes disagree");
  }
  JointGraph g;
  // Dropout regularizes the discriminator only; the VAE branches train
  // clean (the encoders' signal-to-noise is the bottleneck of the whole
  // method at small scale).
  g.pm = record_vae(tape, model.vae_pm, g_pm, x_any, mode, 0.0, rng);
  g.neg = record_vae(tape, model.vae_neg, g_neg, x_neg, mode, 0.0, rng);
  const Tape::ValueId cat = tape.concat_rows(g.pm.mu, g.neg.mu);
  g.probs = record_clf(tape, model.clf, g_clf, cat, mode, dropout_rate, rng);
  g.ce_row = tape.pick_neg_log_rows(g.probs, targets);
  Matrix wrow = clf_loss_weight * weights.transpose();
  g.weighted_ce = tape.cwise_product(g.ce_row, tape.constant(std::move(wrow)));
  g.total_row = tape.add(tape.add(g.pm.loss_row, g.neg.loss_row), g.weighted_ce);
  g.mean_loss = tape.scale(tape.sum_all(g.total_row), 1.0 / static_cast<double>(x_any.cols()));
  return g;
}

std::vector<TrainingPair> sample_pairs(const MILDataset& dataset, int multiplier, Rng& rng) {
  if (multiplier < 1) {
    throw InvalidHyperparameterError("sample_pairs: multiplier must be >= 1");
  }
  std::vector<std::pair<std::size_t, Index>> all, neg;
  for (std::size_t b = 0; b < dataset.bags.size(); ++b) {
    for (Index c = 0; c < dataset.bags[b].instances.cols(); ++c) {
      all.emplace_back(b, c);
      if (dataset.bags[b].label != 1) neg.emplace_back(b, c);
    }
  }
  if (neg.empty()) {
    throw UnsatisfiablePairingError("sample_pairs: dataset has no negative-bag instances");
  }
  std::vector<TrainingPair> pairs;
  const std::size_t n = static_cast<std::size_t>(multiplier) * all.size();
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [ab, ac] = all[rng.below(all.size())];
    const auto [nb, nc] = neg[rng.below(neg.size())];
    TrainingPair p;
    p.x_any = dataset.bags[ab].instances.col(ac);
    p.x_neg = dataset.bags[nb].instances.col(nc);
    p.target = dataset.bags[ab].label == 1 ? 1 : 0;
    p.weight = 1.0;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

double weight_from_error(double recon_error, double calibration_m) {
  if (!(calibration_m > 0.0)) {
    throw UncalibratedModelError("sample_weight: calibration constant m must be > 0");
  }
  if (recon_error < 0.0) {
    throw InvalidInputError("sample_weight: reconstruction error must be >= 0");
  }
  return recon_error / (recon_error + calibration_m);
}

Vector reconstruction_errors(const VaeParams& params, const Matrix& x) {
  Matrix mu, logvar;
  encode_batch(params, x, mu, logvar);
  const Matrix xhat = decode(params, mu);
  Vector e(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    e(c) = recon_loss(x.col(c), xhat.col(c));
  }
  return e;
}

double reconstruction_error(const VaeParams& params, const Vector& x) {
  return reconstruction_errors(params, Matrix(x))(0);
}

double sample_weight(const Vector& x, const VaeParams& vae_neg, double calibration_m) {
  if (!(calibration_m > 0.0)) {
    throw UncalibratedModelError("sample_weight: model is uncalibrated (m <= 0)");
  }
  return weight_from_error(reconstruction_error(vae_neg, x), calibration_m);
}

Vector discriminate(const MilModel& model, const Vector& mu_pm, const Vector& mu_neg) {
  if (mu_pm.size() != model.latent_dim() || mu_neg.size() != model.latent_dim()) {
    throw InvalidShapeError("discriminate: latent vectors must have length n_z");
  }
  Vector h(mu_pm.size() + mu_neg.size());
  h << mu_pm, mu_neg;
  for (const auto& layer : model.clf) h = forward(layer, h);
  return h;
}

JointLossBreakdown joint_loss(const MilModel& model, const TrainingPair& pair, Mode mode,
                              double dropout_rate, double clf_loss_weight, Rng& rng) {
  Tape tape;
  const std::vector<int> targets{pair.target};
  const Vector weights = Vector::Constant(1, pair.weight);
  const JointGraph g =
      record_joint(tape, model, nullptr, nullptr, nullptr, Matrix(pair.x_any),
                   Matrix(pair.x_neg), targets, weights, clf_loss_weight, mode, dropout_rate,
                   rng);
  JointLossBreakdown b;
  b.vae_pm = tape.value(g.pm.loss_row)(0, 0);
  b.vae_neg = tape.value(g.neg.loss_row)(0, 0);
  b.clf = tape.value(g.weighted_ce)(0, 0);
  b.total = tape.value(g.total_row)(0, 0);
  return b;
}

MilModel init_mil_model(const MILDataset& raw_train, const TrainConfig& config) {
  validate_config(config);
  if (raw_train.bags.empty()) {
    throw InvalidInputError("init_mil_model: empty dataset");
  }
  MilModel model;
  model.normalizer = fit_normalizer(raw_train);
  Rng rng(config.seed);
  model.vae_pm = make_vae(raw_train.feature_dim, config.latent_dim, rng, config.latent_head,
                          config.encoder_hidden, config.decoder_hidden);
  model.vae_neg = make_vae(raw_train.feature_dim, config.latent_dim, rng, config.latent_head,
                           config.encoder_hidden, config.decoder_hidden);
  int in = 2 * config.latent_dim;
  for (int h : config.clf_hidden) {
    model.clf.push_back(make_layer(h, in, Activation::kRelu, rng));
    in = h;
  }
  model.clf.push_back(make_layer(2, in, Activation::kSoftmax, rng));
  model.weight_calib_m = 0.0;
  return model;
}

FitResult fit(const MILDataset& raw_train, const TrainConfig& config) {
  validate_config(config);
  if (config.epochs == 0) {
    throw UncalibratedModelError("fit: epochs=0 would leave the model uncalibrated");
  }
  if (raw_train.positive_bags() == 0 || raw_train.negative_bags() == 0) {
    throw UnsatisfiablePairingError("fit: training needs both positive and negative bags");
  }

  FitResult result;
  result.model = init_mil_model(raw_train, config);
  MilModel& model = result.model;
  TrainHistory& hist = result.history;

  // Separate stream from the init draws so init_mil_model() reproduces the
  // starting point exactly.
  Rng rng(mix_seed(config.seed, 1));

  const MILDataset ds = apply(model.normalizer, raw_train);
  const Matrix negatives = negative_instances(ds);
  const Index n_neg = negatives.cols();

  VaeGrads g_pm = zero_grads_like(model.vae_pm);
  VaeGrads g_ng = zero_grads_like(model.vae_neg);
  std::vector<LayerGrad> g_clf;
  for (const auto& l : model.clf) g_clf.push_back(zero_grad_like(l));

  const auto pm_layers = model.vae_pm.layers();
  const auto ng_layers = model.vae_neg.layers();
  const auto clf_layers = model.clf_layers();
  constexpr double kEps = 1e-8;
  RmspropOptimizer opt_pm(config.learning_rate, config.rho, kEps, config.momentum);
  RmspropOptimizer opt_ng(config.learning_rate, config.rho, kEps, config.momentum);
  RmspropOptimizer opt_clf(config.learning_rate, config.rho, kEps, config.momentum);

  const int warmup_epochs = config.epochs / 4;
  const int joint_epochs = config.epochs - warmup_epochs;

  // Phase 1: VAE- alone on negative-bag instances.
  std::vector<Index> order(static_cast<std::size_t>(n_neg));
  std::iota(order.begin(), order.end(), Index{0});
  for (int epoch = 0; epoch < warmup_epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    for (Index start = 0; start < n_neg; start += config.batch_size) {
      const Index len = std::min<Index>(config.batch_size, n_neg - start);
      Matrix xb(ds.feature_dim, len);
      for (Index i = 0; i < len; ++i) {
        xb.col(i) = negatives.col(order[static_cast<std::size_t>(start + i)]);
      }
      Tape tape;
      set_zero(g_ng);
      const VaeGraph g =
          record_vae(tape, model.vae_neg, &g_ng, xb, Mode::kTrain, 0.0, rng);
      const Tape::ValueId loss =
          tape.scale(tape.sum_all(g.loss_row), 1.0 / static_cast<double>(len));
      tape.backward(loss);
      opt_ng.step(ng_layers, g_ng.layers);
      loss_sum += tape.value(g.loss_row).sum();
    }
    const double mean = loss_sum / static_cast<double>(n_neg);
    if (!std::isfinite(mean)) {
      throw DivergenceError("fit: non-finite loss at warm-up epoch " + std::to_string(epoch));
    }
    hist.warmup_loss.push_back(mean);
  }

  // Calibration: median reconstruction error of negative instances under the
  // deterministic mu path.
  model.weight_calib_m = median_of(reconstruction_errors(model.vae_neg, negatives));

  // Phase 2: joint training on freshly sampled pairs each epoch; target=1
  // classifier terms weighted by e/(e+m) under the current VAE-.
  for (int epoch = 0; epoch < joint_epochs; ++epoch) {
    std::vector<TrainingPair> pairs = sample_pairs(ds, config.pair_multiplier, rng);
    {
      std::vector<std::size_t> pos_idx;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].target == 1) pos_idx.push_back(i);
      }
      if (!pos_idx.empty()) {
        Matrix xp(ds.feature_dim, static_cast<Index>(pos_idx.size()));
        for (std::size_t i = 0; i < pos_idx.size(); ++i) {
          xp.col(static_cast<Index>(i)) = pairs[pos_idx[i]].x_any;
        }
        const Vector errs = reconstruction_errors(model.vae_neg, xp);
        for (std::size_t i = 0; i < pos_idx.size(); ++i) {
          pairs[pos_idx[i]].weight = weight_from_error(errs(static_cast<Index>(i)),
                                                       model.weight_calib_m);
        }
      }
    }

    const Index n_pairs = static_cast<Index>(pairs.size());
    double sum_pm = 0.0, sum_ng = 0.0, sum_clf = 0.0, sum_total = 0.0;
    for (Index start = 0; start < n_pairs; start += config.batch_size) {
      const Index len = std::min<Index>(config.batch_size, n_pairs - start);
      Matrix xa(ds.feature_dim, len), xn(ds.feature_dim, len);
      std::vector<int> targets(static_cast<std::size_t>(len));
      Vector weights(len);
      for (Index i = 0; i < len; ++i) {
        const TrainingPair& p = pairs[static_cast<std::size_t>(start + i)];
        xa.col(i) = p.x_any;
        xn.col(i) = p.x_neg;
        targets[static_cast<std::size_t>(i)] = p.target;
        weights(i) = p.weight;
      }
      Tape tape;
      set_zero(g_pm);
      set_zero(g_ng);
      for (auto& g : g_clf) set_zero(g);
      const JointGraph g =
          record_joint(tape, model, &g_pm, &g_ng, &g_clf, xa, xn, targets, weights,
                       config.clf_loss_weight, Mode::kTrain, config.dropout_rate, rng);
      tape.backward(g.mean_loss);
      opt_pm.step(pm_layers, g_pm.layers);
      opt_ng.step(ng_layers, g_ng.layers);
      opt_clf.step(clf_layers, g_clf);
      sum_pm += tape.value(g.pm.loss_row).sum();
      sum_ng += tape.value(g.neg.loss_row).sum();
      sum_clf += tape.value(g.weighted_ce).sum();
      sum_total += tape.value(g.total_row).sum();
    }
    const double denom = static_cast<double>(n_pairs);
    const double mean_total = sum_total / denom;
    if (!std::isfinite(mean_total)) {
      throw DivergenceError("fit: non-finite loss at joint epoch " + std::to_string(epoch));
    }
    hist.vae_pm_loss.push_back(sum_pm / denom);
    hist.vae_neg_loss.push_back(sum_ng / denom);
    hist.clf_loss.push_back(sum_clf / denom);
    hist.joint_loss.push_back(mean_total);
  }

  return result;
}

double separation_proxy(const MilModel& model, const MILDataset& raw_dataset) {
  if (!raw_dataset.has_instance_labels()) {
    throw InvalidInputError("separation_proxy: dataset lacks ground-truth instance labels");
  }
  Vector sum_pos = Vector::Zero(model.latent_dim());
  Vector sum_neg = Vector::Zero(model.latent_dim());
  Index n_pos = 0, n_neg = 0;
  for (const auto& bag : raw_dataset.bags) {
    const Matrix mu = encode_mu(model.vae_pm, apply(model.normalizer, bag.instances));
    for (Index c = 0; c < mu.cols(); ++c) {
      if (bag.instance_labels[static_cast<std::size_t>(c)] == 1) {
        sum_pos += mu.col(c);
        ++n_pos;
      } else {
        sum_neg += mu.col(c);
        ++n_neg;
      }
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw InvalidInputError("separation_proxy: need instances of both ground-truth classes");
  }
  const Vector diff = sum_pos / static_cast<double>(n_pos) - sum_neg / static_cast<double>(n_neg);
  return 0.5 * diff.squaredNorm();
}

}  // namespace milvae
