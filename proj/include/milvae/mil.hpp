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

#include "milvae/data.hpp"
#include "milvae/rng.hpp"
#include "milvae/types.hpp"
#include "milvae/vae.hpp"

namespace milvae {

// One training pair: x_any goes to the all-instance VAE, x_neg (always from a
// negative bag) to the negative-instance VAE. target is 1 iff x_any came from
// a positive bag. weight stays 1 for target = 0; for target = 1 it is the
// reconstruction-error weight e/(e+m) in [0,1).
struct TrainingPair {
  Vector x_any;
  Vector x_neg;
  int target = 0;
  double weight = 1.0;
};

// The joint model: two VAEs of identical shape, the latent discriminator over
// [mu_pm ; mu_neg], the weight-calibration constant m (median negative
// reconstruction error) and the fitted min-max normalizer.
struct MilModel {
  VaeParams vae_pm;
  VaeParams vae_neg;
  std::vector<DenseLayer> clf;  // e.g. 2*nz -> 64 relu -> 64 relu -> 2 softmax
  double weight_calib_m = 0.0;
  Normalizer normalizer;

  int latent_dim() const { return vae_pm.latent_dim; }
  int input_dim() const { return vae_pm.input_dim; }
  std::vector<DenseLayer*> clf_layers();
};

struct TrainConfig {
  int latent_dim = 2;
  double learning_rate = 1e-3;
  double rho = 0.9;
  double momentum = 0.0;  // velocity on the preconditioned step; 0 = plain RMSprop
  int batch_size = 32;
  double dropout_rate = 0.25;
  int epochs = 100;
  int pair_multiplier = 4;  // pairs per epoch = multiplier * total instances
  double clf_loss_weight = 1.0;
  LatentHead latent_head = LatentHead::kLinear;
  std::uint64_t seed = 0;
  std::vector<int> encoder_hidden = {512, 256};
  std::vector<int> decoder_hidden = {256, 512};
  std::vector<int> clf_hidden = {64, 64};
};

struct TrainHistory {
  std::vector<double> warmup_loss;   // phase 1: per-epoch mean VAE- loss
  std::vector<double> joint_loss;    // phase 2: per-epoch mean total
  std::vector<double> vae_pm_loss;   // phase 2 components (per-pair means)
  std::vector<double> vae_neg_loss;
  std::vector<double> clf_loss;      // weighted classifier term
};

struct FitResult {
  MilModel model;
  TrainHistory history;
};

// r * N pairs (N = total instances): x_any uniform over all instances, x_neg
// uniform over negative-bag instances. Throws UnsatisfiablePairingError when
// the dataset has no negative bags.
std::vector<TrainingPair> sample_pairs(const MILDataset& dataset, int multiplier, Rng& rng);

// w = e / (e + m); monotone in e, 0 at e = 0, 0.5 at e = m.
double weight_from_error(double recon_error, double calibration_m);

// Deterministic reconstruction error through the mu path (z = mu, no
// sampling): recon_loss(x, decode(encode(x).mu)).
double reconstruction_error(const VaeParams& params, const Vector& x);
Vector reconstruction_errors(const VaeParams& params, const Matrix& x);

// Weight of one (normalized) instance under the negative VAE. Requires
// calibration_m > 0, else UncalibratedModelError.
double sample_weight(const Vector& x, const VaeParams& vae_neg, double calibration_m);

// Softmax probabilities (negative, positive) of the discriminator on the
// concatenated posterior means. Inference mode, no dropout.
Vector discriminate(const MilModel& model, const Vector& mu_pm, const Vector& mu_neg);

struct JointLossBreakdown {
  double vae_pm = 0.0;
  double vae_neg = 0.0;
  double clf = 0.0;  // clf_loss_weight * pair.weight * cross-entropy
  double total = 0.0;
};

// Single-pair joint loss with the pair's weight applied to the classifier
// term.
JointLossBreakdown joint_loss(const MilModel& model, const TrainingPair& pair, Mode mode,
                              double dropout_rate, double clf_loss_weight, Rng& rng);

// Recorded joint graph over a batch of pairs (columns). Gradient buffers may
// be nullptr to freeze a component. dropout_rate applies to the
// discriminator's hidden layers; the VAE branches run without dropout.
struct JointGraph {
  VaeGraph pm;
  VaeGraph neg;
  Tape::ValueId probs = -1;
  Tape::ValueId ce_row = -1;       // unweighted -log p(target), 1xB
  Tape::ValueId weighted_ce = -1;  // clf_loss_weight * weight * ce, 1xB
  Tape::ValueId total_row = -1;    // per-pair joint loss, 1xB
  Tape::ValueId mean_loss = -1;    // 1x1 batch mean
};

JointGraph record_joint(Tape& tape, const MilModel& model, VaeGrads* g_pm, VaeGrads* g_neg,
                        std::vector<LayerGrad>* g_clf, const Matrix& x_any,
                        const Matrix& x_neg, const std::vector<int>& targets,
                        const Vector& weights, double clf_loss_weight, Mode mode,
                        double dropout_rate, Rng& rng);

// The untrained model fit() starts from: normalizer fitted on the raw bags,
// both VAEs and the discriminator initialized from Rng(config.seed) in fit()
// order, calibration m = 0.
MilModel init_mil_model(const MILDataset& raw_train, const TrainConfig& config);

// Two-phase training on raw bags (the normalizer is fitted here and applied
// internally): phase 1 warms up the negative VAE for epochs/4 epochs and
// computes m; phase 2 jointly trains both VAEs and the discriminator on
// freshly sampled pairs each epoch, with target=1 classifier terms weighted
// by e/(e+m) under the current negative VAE.
FitResult fit(const MILDataset& raw_train, const TrainConfig& config);

// 0.5 * || mean mu_pm over ground-truth-positive instances
//          - mean mu_pm over ground-truth-negative instances ||^2.
// Requires synthetic-style instance labels.
double separation_proxy(const MilModel& model, const MILDataset& raw_dataset);

}  // namespace milvae
