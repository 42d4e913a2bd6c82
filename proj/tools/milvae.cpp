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

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "milvae/bag.hpp"
#include "milvae/cv.hpp"
#include "milvae/data.hpp"
#include "milvae/errors.hpp"
#include "milvae/mil.hpp"
#include "milvae/selfcheck.hpp"
#include "milvae/serialize.hpp"
#include "milvae/vae.hpp"

namespace fs = std::filesystem;
using namespace milvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string data;
  std::string out = "out";
  std::string model_path;
  std::string classifier = "knn";
  std::string latent_head = "linear";
  std::vector<int> nz_list;
  CvConfig cv;
  SynthConfig synth;
  std::string synth_out = "synth.csv";
  bool inject_fault = false;
};

void add_train_options(CLI::App* cmd, Options& opt) {
  cmd->add_option("--nz", opt.cv.train.latent_dim, "Latent dimension n_z");
  cmd->add_option("--epochs", opt.cv.train.epochs, "Total epochs (first quarter warms up VAE-)");
  cmd->add_option("--batch", opt.cv.train.batch_size, "Minibatch size");
  cmd->add_option("--lr", opt.cv.train.learning_rate, "RMSprop learning rate");
  cmd->add_option("--rho", opt.cv.train.rho, "RMSprop squared-gradient decay");
  cmd->add_option("--momentum", opt.cv.train.momentum,
                  "RMSprop velocity coefficient (0 = plain RMSprop)");
  cmd->add_option("--dropout", opt.cv.train.dropout_rate, "Dropout rate on hidden layers");
  cmd->add_option("--pair-mult", opt.cv.train.pair_multiplier,
                  "Training pairs per epoch as a multiple of the instance count");
  cmd->add_option("--clf-weight", opt.cv.train.clf_loss_weight,
                  "Weight of the classifier term in the joint loss");
  cmd->add_option("--latent-head", opt.latent_head, "Latent mean head: linear or relu-mu")
      ->check(CLI::IsMember({"linear", "relu-mu"}));
  cmd->add_option("--seed", opt.cv.train.seed, "Master random seed");
}

TrainConfig finalize_train(const Options& opt) {
  TrainConfig tc = opt.cv.train;
  tc.latent_head = opt.latent_head == "relu-mu" ? LatentHead::kReluMu : LatentHead::kLinear;
  return tc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed while writing " + path.string());
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_synth(const Options& opt) {
  const MILDataset ds = synth_generate(opt.synth);
  if (const fs::path parent = fs::path(opt.synth_out).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_bags(ds, opt.synth_out);
  std::cout << "wrote " << opt.synth_out << ": " << ds.bags.size() << " bags, "
            << ds.total_instances() << " instances, d=" << ds.feature_dim << "\n";
  return kExitOk;
}

int cmd_train(const Options& opt) {
  const MILDataset ds = load_bags(opt.data);
  const TrainConfig tc = finalize_train(opt);
  const FitResult r = fit(ds, tc);
  fs::create_directories(opt.out);
  const fs::path model_path = fs::path(opt.out) / "model.bin";
  save_model(r.model, model_path);

  std::string hist = "epoch,phase,total,vae_pm,vae_neg,clf\n";
  for (std::size_t e = 0; e < r.history.warmup_loss.size(); ++e) {
    hist += std::to_string(e) + ",warmup," + fmt17(r.history.warmup_loss[e]) + ",,,\n";
  }
  for (std::size_t e = 0; e < r.history.joint_loss.size(); ++e) {
    hist += std::to_string(e) + ",joint," + fmt17(r.history.joint_loss[e]) + "," +
            fmt17(r.history.vae_pm_loss[e]) + "," + fmt17(r.history.vae_neg_loss[e]) + "," +
            fmt17(r.history.clf_loss[e]) + "\n";
  }
  write_text(fs::path(opt.out) / "train_history.csv", hist);

  std::cout << "model: " << model_path.string() << "\n";
  std::cout << "weight calibration m = " << r.model.weight_calib_m << "\n";
  if (!r.history.joint_loss.empty()) {
    std::cout << "joint loss: first " << r.history.joint_loss.front() << ", last "
              << r.history.joint_loss.back() << "\n";
  }
  return kExitOk;
}

int cmd_cv(const Options& opt) {
  const MILDataset ds = load_bags(opt.data);
  CvConfig cfg = opt.cv;
  cfg.train = finalize_train(opt);
  cfg.classifier = classifier_from_string(opt.classifier);
  const CvReport report = run_cv(ds, cfg);
  fs::create_directories(opt.out);
  const std::string table = report_table(report);
  write_text(fs::path(opt.out) / "cv_report.csv", table);
  std::cout << table << report_summary(report);
  return kExitOk;
}

int cmd_encode(const Options& opt) {
  const MILDataset ds = load_bags(opt.data);
  const MilModel model = load_model(opt.model_path);
  if (ds.feature_dim != model.input_dim()) {
    throw InvalidInputError("encode: dataset has d=" + std::to_string(ds.feature_dim) +
                            " but the model expects d=" + std::to_string(model.input_dim()));
  }
  fs::create_directories(opt.out);
  const int nz = model.latent_dim();

  std::string out = "bag_id,instance,label";
  for (int j = 0; j < nz; ++j) out += ",mu_pm_" + std::to_string(j);
  for (int j = 0; j < nz; ++j) out += ",mu_neg_" + std::to_string(j);
  out += ",recon_error_neg\n";
  for (const auto& bag : ds.bags) {
    const Matrix x = apply(model.normalizer, bag.instances);
    const Matrix mu_pm = encode_mu(model.vae_pm, x);
    const Matrix mu_ng = encode_mu(model.vae_neg, x);
    const Vector err = reconstruction_errors(model.vae_neg, x);
    for (Index c = 0; c < x.cols(); ++c) {
      out += bag.id + "," + std::to_string(c) + "," + std::to_string(bag.label);
      for (Index j = 0; j < nz; ++j) out += "," + fmt17(mu_pm(j, c));
      for (Index j = 0; j < nz; ++j) out += "," + fmt17(mu_ng(j, c));
      out += "," + fmt17(err(c)) + "\n";
    }
  }
  write_text(fs::path(opt.out) / "encodings.csv", out);
  save_bag_features(pool_dataset(model, ds), fs::path(opt.out) / "bag_features.csv");
  std::cout << "wrote " << (fs::path(opt.out) / "encodings.csv").string() << " and "
            << (fs::path(opt.out) / "bag_features.csv").string() << "\n";
  return kExitOk;
}

int cmd_sweep(const Options& opt) {
  if (opt.nz_list.empty()) {
    throw InvalidHyperparameterError("sweep: --nz-list must name at least one latent size");
  }
  const MILDataset ds = load_bags(opt.data);
  CvConfig cfg = opt.cv;
  cfg.train = finalize_train(opt);
  cfg.classifier = classifier_from_string(opt.classifier);
  const auto entries = run_sweep(ds, cfg, opt.nz_list);
  fs::create_directories(opt.out);
  for (const auto& e : entries) {
    if (e.ok) {
      write_text(fs::path(opt.out) / ("cv_report_nz" + std::to_string(e.nz) + ".csv"),
                 report_table(e.report));
    }
  }
  const std::string table = sweep_table(entries);
  write_text(fs::path(opt.out) / "sweep_report.csv", table);
  std::cout << table;
  return kExitOk;
}

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Rewrites argv so that `key = value` lines from a --config file become
// `--key value` arguments injected right after the subcommand, but only for
// flags the command line does not set itself. Keys that do not name an
// option of the chosen subcommand are ignored, so one file can serve several
// subcommands.
std::vector<std::string> layer_config_file(const std::vector<std::string>& args,
                                           const CLI::App& app) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trimmed(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    const std::string key = trimmed(t.substr(0, eq));
    const std::string value = trimmed(t.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    entries.emplace_back(key, value);
  }

  std::vector<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.push_back(a.substr(0, a.find('=')));
  }
  std::vector<std::string> out;
  out.reserve(args.size() + 2 * entries.size());
  bool injected = false;
  for (const auto& a : args) {
    out.push_back(a);
    if (!injected && !a.empty() && a[0] != '-') {
      // First bare token is the subcommand; config flags go right after it.
      const CLI::App* sub = nullptr;
      for (const CLI::App* s : app.get_subcommands({})) {
        if (s->get_name() == a) sub = s;
      }
      for (const auto& [key, value] : entries) {
        const std::string flag = "--" + key;
        if (flag == "--config") continue;
        if (sub != nullptr && sub->get_option_no_throw(flag) == nullptr) continue;
        if (std::find(given.begin(), given.end(), flag) == given.end()) {
          out.push_back(flag);
          out.push_back(value);
        }
      }
      injected = true;
    }
  }
  return out;
}

int cmd_selfcheck(const Options& opt) {
  const auto results = run_selfcheck(opt.inject_fault);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "selfcheck: all checks passed\n" : "selfcheck: FAILURES above\n");
  return all_pass ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"milvae: multiple-instance feature learning with paired VAEs"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic two-cluster MIL dataset");
  synth->add_option("--out", opt.synth_out, "Output bag file");
  synth->add_option("--bags", opt.synth.n_bags, "Number of bags");
  synth->add_option("--instances", opt.synth.instances_per_bag, "Instances per bag");
  synth->add_option("--witness-rate", opt.synth.witness_rate,
                    "Witness probability per positive-bag instance");
  synth->add_option("--dim", opt.synth.feature_dim, "Feature dimension");
  synth->add_option("--separation", opt.synth.separation, "Witness cluster separation");
  synth->add_option("--seed", opt.synth.seed, "Random seed");

  CLI::App* train = app.add_subcommand("train", "Train a model on a bag file");
  train->add_option("--data", opt.data, "Bag file")->required();
  train->add_option("--out", opt.out, "Output directory");
  add_train_options(train, opt);

  CLI::App* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  cv->add_option("--data", opt.data, "Bag file")->required();
  cv->add_option("--out", opt.out, "Output directory");
  cv->add_option("--classifier", opt.classifier, "Bag classifier: knn, nn or adaboost")
      ->check(CLI::IsMember({"knn", "nn", "adaboost"}));
  cv->add_option("--k-folds", opt.cv.k_folds, "Number of folds");
  cv->add_option("--knn-k", opt.cv.knn_k, "KNN neighbor count");
  cv->add_option("--rounds", opt.cv.adaboost_rounds, "AdaBoost rounds");
  cv->add_option("--nn-epochs", opt.cv.nn_epochs, "Downstream NN classifier epochs");
  cv->add_option("--threads", opt.cv.threads, "Parallel fold workers (0 = auto)");
  add_train_options(cv, opt);

  CLI::App* encode = app.add_subcommand("encode", "Export per-instance latents and bag features");
  encode->add_option("--data", opt.data, "Bag file")->required();
  encode->add_option("--model", opt.model_path, "Trained model file")->required();
  encode->add_option("--out", opt.out, "Output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "Run cv for each latent size in a list");
  sweep->add_option("--data", opt.data, "Bag file")->required();
  sweep->add_option("--out", opt.out, "Output directory");
  sweep->add_option("--nz-list", opt.nz_list, "Latent sizes to sweep")->delimiter(',');
  sweep->add_option("--classifier", opt.classifier, "Bag classifier: knn, nn or adaboost")
      ->check(CLI::IsMember({"knn", "nn", "adaboost"}));
  sweep->add_option("--k-folds", opt.cv.k_folds, "Number of folds");
  sweep->add_option("--knn-k", opt.cv.knn_k, "KNN neighbor count");
  sweep->add_option("--rounds", opt.cv.adaboost_rounds, "AdaBoost rounds");
  sweep->add_option("--nn-epochs", opt.cv.nn_epochs, "Downstream NN classifier epochs");
  sweep->add_option("--threads", opt.cv.threads, "Parallel fold workers (0 = auto)");
  add_train_options(sweep, opt);

  CLI::App* selfcheck = app.add_subcommand("selfcheck", "Run the numeric self-check suite");
  selfcheck->add_flag("--inject-fault", opt.inject_fault,
                      "Corrupt one analytic gradient (negative control; must fail)");

  // Flat `key = value` config files; command-line flags override file values.
  std::string config_path;
  for (CLI::App* sub : {synth, train, cv, encode, sweep, selfcheck}) {
    sub->add_option("--config", config_path,
                    "Read options from a flat key = value file (flags override)");
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = layer_config_file(args, app);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  std::vector<const char*> cargs;
  cargs.push_back(argv[0]);
  for (const auto& a : args) cargs.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(opt);
    if (train->parsed()) return cmd_train(opt);
    if (cv->parsed()) return cmd_cv(opt);
    if (encode->parsed()) return cmd_encode(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (selfcheck->parsed()) return cmd_selfcheck(opt);
  } catch (const DivergenceError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvalidInputError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvalidShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
