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

#include "milvae/cv.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "milvae/errors.hpp"
#include "milvae/rng.hpp"

namespace milvae {

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kKnn:
      return "knn";
    case ClassifierKind::kNn:
      return "nn";
    case ClassifierKind::kAdaBoost:
      return "adaboost";
  }
  return "unknown";
}

ClassifierKind classifier_from_string(const std::string& name) {
  if (name == "knn") return ClassifierKind::kKnn;
  if (name == "nn") return ClassifierKind::kNn;
  if (name == "adaboost") return ClassifierKind::kAdaBoost;
  throw InvalidHyperparameterError("unknown classifier '" + name +
                                   "' (expected knn, nn or adaboost)");
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Re-raises a fold worker's exception with the fold named, preserving the
// error's type so the CLI exit-code mapping survives.
[[noreturn]] void rethrow_with_fold(std::exception_ptr ep, int fold) {
  const std::string prefix = "cv fold " + std::to_string(fold) + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what());
  } catch (const UnsatisfiablePairingError& e) {
    throw UnsatisfiablePairingError(prefix + e.what());
  } catch (const UncalibratedModelError& e) {
    throw UncalibratedModelError(prefix + e.what());
  } catch (const DegenerateTrainingError& e) {
    throw DegenerateTrainingError(prefix + e.what());
  } catch (const InvalidHyperparameterError& e) {
    throw InvalidHyperparameterError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
  // Non-library exceptions propagate from rethrow_exception unchanged.
}

FoldResult evaluate_fold(const MILDataset& raw, const FoldPlan& plan, int fold,
                         const CvConfig& config) {
  const MILDataset train = fold_subset(raw, plan, fold, /*train_part=*/true);
  const MILDataset test = fold_subset(raw, plan, fold, /*train_part=*/false);

  TrainConfig tc = config.train;
  tc.seed = mix_seed(config.train.seed, static_cast<std::uint64_t>(fold) + 1);
  const FitResult fitted = fit(train, tc);

  std::vector<BagFeature> train_feats = pool_dataset(fitted.model, train);
  std::vector<BagFeature> test_feats = pool_dataset(fitted.model, test);
  const FeatureScaler scaler = fit_scaler(train_feats);
  train_feats = standardize(scaler, train_feats);
  test_feats = standardize(scaler, test_feats);

  std::vector<int> preds, labels;
  preds.reserve(test_feats.size());
  labels.reserve(test_feats.size());
  switch (config.classifier) {
    case ClassifierKind::kKnn: {
      const int k = std::min<int>(config.knn_k, static_cast<int>(train_feats.size()));
      for (const auto& f : test_feats) preds.push_back(knn_predict(train_feats, f.values, k));
      break;
    }
    case ClassifierKind::kNn: {
      NnClassifierConfig nc;
      nc.epochs = config.nn_epochs;
      nc.seed = mix_seed(tc.seed, 0xC1A55);
      const NnClassifier clf = nn_fit(train_feats, nc);
      for (const auto& f : test_feats) preds.push_back(nn_predict(clf, f.values));
      break;
    }
    case ClassifierKind::kAdaBoost: {
      const StumpEnsemble ens = adaboost_fit(train_feats, config.adaboost_rounds);
      for (const auto& f : test_feats) preds.push_back(adaboost_predict(ens, f.values));
      break;
    }
  }
  for (const auto& f : test_feats) labels.push_back(f.label);
  const Metrics m = metrics(preds, labels);

  FoldResult r;
  r.fold = fold;
  r.accuracy = m.accuracy;
  r.f_score = m.f_score;
  r.test_bags = static_cast<int>(test_feats.size());
  return r;
}

}  // namespace

CvReport run_cv(const MILDataset& raw, const CvConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const FoldPlan plan = stratified_kfold(raw, config.k_folds, config.train.seed);

  CvReport report;
  report.config = config;
  report.folds.resize(static_cast<std::size_t>(config.k_folds));

  int workers = config.threads;
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
  }
  workers = std::min(workers, config.k_folds);

  std::atomic<int> next{0};
  std::exception_ptr first_error;
  int first_error_fold = -1;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int fold = next.fetch_add(1);
      if (fold >= config.k_folds) return;
      try {
        report.folds[static_cast<std::size_t>(fold)] = evaluate_fold(raw, plan, fold, config);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
          first_error_fold = fold;
        }
        return;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) rethrow_with_fold(first_error, first_error_fold);

  double acc = 0.0, f = 0.0;
  for (const auto& r : report.folds) {
    acc += r.accuracy;
    f += r.f_score;
  }
  const double k = static_cast<double>(config.k_folds);
  report.mean_accuracy = acc / k;
  report.mean_f_score = f / k;
  double va = 0.0, vf = 0.0;
  for (const auto& r : report.folds) {
    va += (r.accuracy - report.mean_accuracy) * (r.accuracy - report.mean_accuracy);
    vf += (r.f_score - report.mean_f_score) * (r.f_score - report.mean_f_score);
  }
  report.std_accuracy = std::sqrt(va / k);
  report.std_f_score = std::sqrt(vf / k);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string report_table(const CvReport& report) {
  std::ostringstream out;
  const CvConfig& c = report.config;
  out << "# milvae cv report\n";
  out << "# classifier = " << to_string(c.classifier) << "\n";
  out << "# k_folds = " << c.k_folds << "\n";
  out << "# nz = " << c.train.latent_dim << "\n";
  out << "# epochs = " << c.train.epochs << "\n";
  out << "# batch = " << c.train.batch_size << "\n";
  out << "# lr = " << fmt(c.train.learning_rate) << "\n";
  out << "# rho = " << fmt(c.train.rho) << "\n";
  out << "# dropout = " << fmt(c.train.dropout_rate) << "\n";
  out << "# pair_multiplier = " << c.train.pair_multiplier << "\n";
  out << "# clf_loss_weight = " << fmt(c.train.clf_loss_weight) << "\n";
  out << "# latent_head = "
      << (c.train.latent_head == LatentHead::kLinear ? "linear" : "relu-mu") << "\n";
  out << "# knn_k = " << c.knn_k << "\n";
  out << "# adaboost_rounds = " << c.adaboost_rounds << "\n";
  out << "# nn_epochs = " << c.nn_epochs << "\n";
  out << "# seed = " << c.train.seed << "\n";
  out << "fold,accuracy,f_score,test_bags\n";
  for (const auto& r : report.folds) {
    out << r.fold << "," << fmt(r.accuracy) << "," << fmt(r.f_score) << "," << r.test_bags
        << "\n";
  }
  out << "# mean_accuracy = " << fmt(report.mean_accuracy) << "\n";
  out << "# std_accuracy = " << fmt(report.std_accuracy) << "\n";
  out << "# mean_f_score = " << fmt(report.mean_f_score) << "\n";
  out << "# std_f_score = " << fmt(report.std_f_score) << "\n";
  return out.str();
}

std::string report_summary(const CvReport& report) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d-fold CV, %s classifier, nz=%d, seed=%llu\n",
                report.config.k_folds, to_string(report.config.classifier).c_str(),
                report.config.train.latent_dim,
                static_cast<unsigned long long>(report.config.train.seed));
  out << buf;
  std::snprintf(buf, sizeof(buf), "accuracy: %.4f +/- %.4f\n", report.mean_accuracy,
                report.std_accuracy);
  out << buf;
  std::snprintf(buf, sizeof(buf), "f_score:  %.4f +/- %.4f\n", report.mean_f_score,
                report.std_f_score);
  out << buf;
  std::snprintf(buf, sizeof(buf), "wall time: %.1f s\n", report.wall_seconds);
  out << buf;
  return out.str();
}

std::vector<SweepEntry> run_sweep(const MILDataset& raw, const CvConfig& base,
                                  const std::vector<int>& nz_list) {
  if (nz_list.empty()) {
    throw InvalidHyperparameterError("run_sweep: nz list must be nonempty");
  }
  std::vector<SweepEntry> entries;
  entries.reserve(nz_list.size());
  for (int nz : nz_list) {
    SweepEntry e;
    e.nz = nz;
    CvConfig cfg = base;
    cfg.train.latent_dim = nz;
    try {
      e.report = run_cv(raw, cfg);
      e.ok = true;
    } catch (const std::exception& ex) {
      e.ok = false;
      e.error = ex.what();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string sweep_table(const std::vector<SweepEntry>& entries) {
  std::ostringstream out;
  out << "nz,status,mean_accuracy,std_accuracy,mean_f_score,std_f_score,error\n";
  for (const auto& e : entries) {
    if (e.ok) {
      out << e.nz << ",ok," << fmt(e.report.mean_accuracy) << "," << fmt(e.report.std_accuracy)
          << "," << fmt(e.report.mean_f_score) << "," << fmt(e.report.std_f_score) << ",\n";
    } else {
      std::string msg = e.error;
      for (auto& ch : msg) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      out << e.nz << ",error,,,,," << msg << "\n";
    }
  }
  return out.str();
}

}  // namespace milvae
