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

#include <string>
#include <vector>

#include "milvae/bag.hpp"
#include "milvae/data.hpp"
#include "milvae/mil.hpp"

namespace milvae {

enum class ClassifierKind { kKnn, kNn, kAdaBoost };

std::string to_string(ClassifierKind kind);
ClassifierKind classifier_from_string(const std::string& name);

struct CvConfig {
  TrainConfig train;
  ClassifierKind classifier = ClassifierKind::kKnn;
  int k_folds = 10;
  int knn_k = 5;
  int adaboost_rounds = 100;
  int nn_epochs = 200;
  // 0 = one worker per fold up to the hardware concurrency. Folds are
  // independent (seeded per-fold), so results do not depend on scheduling.
  int threads = 0;
};

struct FoldResult {
  int fold = 0;
  double accuracy = 0.0;
  double f_score = 0.0;
  int test_bags = 0;
};

struct CvReport {
  CvConfig config;
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std across folds
  double mean_f_score = 0.0;
  double std_f_score = 0.0;
  double wall_seconds = 0.0;  // never written into the report file
};

// Per fold: fit normalizer + model on the training bags, pool and standardize
// bag features, classify the held-out bags, collect metrics. Fold f trains
// with seed mix_seed(seed, f + 1).
CvReport run_cv(const MILDataset& raw, const CvConfig& config);

// Deterministic report text (config echo as comments, one row per fold,
// aggregate comments at the end). Excludes wall time by design.
std::string report_table(const CvReport& report);

// Human-readable block including wall time; stdout only.
std::string report_summary(const CvReport& report);

struct SweepEntry {
  int nz = 0;
  bool ok = false;
  std::string error;
  CvReport report;
};

// cmd_cv per nz, continuing past per-nz failures; output order follows the
// input list.
std::vector<SweepEntry> run_sweep(const MILDataset& raw, const CvConfig& base,
                                  const std::vector<int>& nz_list);

std::string sweep_table(const std::vector<SweepEntry>& entries);

}  // namespace milvae
