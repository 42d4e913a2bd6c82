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
#include <filesystem>
#include <string>
#include <vector>

#include "milvae/types.hpp"

namespace milvae {

struct Bag {
  std::string id;
  int label = -1;     // -1 or +1
  Matrix instances;   // d x m, one instance per column
  // Ground-truth per-instance labels (+1/-1); only the synthetic generator
  // fills these. Not persisted by save_bags.
  std::vector<int> instance_labels;
};

struct MILDataset {
  std::vector<Bag> bags;
  int feature_dim = 0;

  Index total_instances() const;
  int positive_bags() const;
  int negative_bags() const;
  bool has_instance_labels() const;
};

// Compares ids, labels, dimensions and instance values exactly (ground-truth
// instance labels are not persisted, so they are not compared).
bool equal(const MILDataset& a, const MILDataset& b);

// Bag file: UTF-8, comma-delimited, header `bag_id,label,f0,...,f{d-1}`.
// Rows are grouped by bag_id preserving first-appearance order; the bag label
// comes from the first row and conflicting labels are an error. Parse errors
// name the offending 1-based line.
MILDataset load_bags(const std::filesystem::path& path);
void save_bags(const MILDataset& dataset, const std::filesystem::path& path);

// Per-feature min/max fitted on training data; apply maps to [0,1] with
// x' = (x - min) / (max - min), constant features to 0.5, and clamps held-out
// values into [0,1].
struct Normalizer {
  Vector min;
  Vector max;
};

Normalizer fit_normalizer(const MILDataset& train);
Vector apply(const Normalizer& norm, const Vector& x);
Matrix apply(const Normalizer& norm, const Matrix& x);
MILDataset apply(const Normalizer& norm, const MILDataset& dataset);

// Partition of bags into k folds, positives and negatives separately shuffled
// and dealt round-robin so per-fold class counts differ by at most one.
struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of_bag;  // parallel to dataset.bags
};

FoldPlan stratified_kfold(const MILDataset& dataset, int k, std::uint64_t seed);

// Bags of one fold (train_part = false) or everything else (train_part = true).
MILDataset fold_subset(const MILDataset& dataset, const FoldPlan& plan, int fold,
                       bool train_part);

// Two-cluster synthetic MIL generator with ground-truth instance labels.
// Negative instances ~ N(0, I_d); witnesses ~ N(separation * u, I_d) for the
// fixed unit direction u = (1,...,1)/sqrt(d). Every positive bag is forced to
// contain at least one witness, so the MIL labeling rule holds by
// construction (and is asserted).
struct SynthConfig {
  int n_bags = 100;
  int instances_per_bag = 10;
  double witness_rate = 0.3;
  int feature_dim = 20;
  double separation = 4.0;
  std::uint64_t seed = 0;
};

MILDataset synth_generate(const SynthConfig& config);

}  // namespace milvae
