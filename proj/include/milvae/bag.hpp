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
#include <string>
#include <vector>

#include "milvae/data.hpp"
#include "milvae/mil.hpp"
#include "milvae/nn.hpp"
#include "milvae/types.hpp"

namespace milvae {

// Fixed-size bag descriptor: per-latent-dimension statistics of the bag's
// encodings, laid out [min_0..min_{nz-1}, max.., mean.., std..]. std is the
// population standard deviation so single-instance bags are valid.
struct BagFeature {
  Vector values;  // 4 * nz
  int label = 0;  // -1 / +1
  std::string bag_id;
};

// Pools one bag's latent vectors (columns). Empty input -> EmptyBagError.
BagFeature pool_bag(const Matrix& latents, int label = 0, std::string bag_id = {});

// Normalize each bag with the model's normalizer, encode with VAE+- (mu path)
// and pool.
std::vector<BagFeature> pool_dataset(const MilModel& model, const MILDataset& raw);

// Zero-mean unit-variance scaling fitted on training bag features; features
// with (near-)zero spread map to 0.
struct FeatureScaler {
  Vector mean;
  Vector stddev;
};
FeatureScaler fit_scaler(const std::vector<BagFeature>& train);
Vector standardize(const FeatureScaler& scaler, const Vector& values);
std::vector<BagFeature> standardize(const FeatureScaler& scaler,
                                    const std::vector<BagFeature>& feats);

// Majority label among the k nearest training features by Euclidean distance;
// ties (even k) break toward the single nearest neighbor. k > |train| ->
// InvalidHyperparameterError.
int knn_predict(const std::vector<BagFeature>& train, const Vector& query, int k);

struct NnClassifierConfig {
  std::vector<int> hidden = {64, 64};
  double learning_rate = 1e-3;
  double rho = 0.9;
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct NnClassifier {
  std::vector<DenseLayer> layers;  // hidden ReLU stack + 2-way softmax
};

// Cross-entropy + RMSprop on standardized bag features. Single-class
// training sets -> DegenerateTrainingError.
NnClassifier nn_fit(const std::vector<BagFeature>& train, const NnClassifierConfig& config);
int nn_predict(const NnClassifier& clf, const Vector& query);

// Discrete AdaBoost over depth-1 stumps; thresholds at midpoints between
// sorted distinct feature values.
struct Stump {
  int feature = 0;
  double threshold = 0.0;
  int polarity = 1;  // +1: predict +1 above threshold; -1: predict +1 below
  double alpha = 0.0;
};

struct StumpEnsemble {
  std::vector<Stump> stumps;
};

StumpEnsemble adaboost_fit(const std::vector<BagFeature>& train, int rounds = 100);
int adaboost_predict(const StumpEnsemble& ensemble, const Vector& query);

struct Metrics {
  double accuracy = 0.0;
  double f_score = 0.0;
  double error_rate = 0.0;
};

// accuracy = correct/total, F = 2TP / (2TP + FP + FN) with +1 the positive
// class (defined as 1 when the denominator is zero, i.e. everything is a true
// negative), error_rate = 1 - accuracy.
Metrics metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// Writes the pooled-feature table: header bag_id,label,f_0..f_{4nz-1}.
void save_bag_features(const std::vector<BagFeature>& feats,
                       const std::filesystem::path& path);

}  // namespace milvae
