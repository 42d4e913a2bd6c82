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

#include "milvae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <utility>

#include "milvae/errors.hpp"
#include "milvae/rng.hpp"

namespace milvae {

Index MILDataset::total_instances() const {
  Index n = 0;
  for (const auto& b : bags) n += b.instances.cols();
  return n;
}

int MILDataset::positive_bags() const {
  int n = 0;
  for (const auto& b : bags) n += b.label == 1 ? 1 : 0;
  return n;
}

int MILDataset::negative_bags() const {
  return static_cast<int>(bags.size()) - positive_bags();
}

bool MILDataset::has_instance_labels() const {
  for (const auto& b : bags) {
    if (b.instance_labels.size() != static_cast<std::size_t>(b.instances.cols())) return false;
  }
  return !bags.empty();
}

bool equal(const MILDataset& a, const MILDataset& b) {
  if (a.feature_dim != b.feature_dim || a.bags.size() != b.bags.size()) return false;
  for (std::size_t i = 0; i < a.bags.size(); ++i) {
    const Bag& x = a.bags[i];
    const Bag& y = b.bags[i];
    if (x.id != y.id || x.label != y.label) return false;
    if (x.instances.rows() != y.instances.rows() || x.instances.cols() != y.instances.cols())
      return false;
    if (x.instances != y.instances) return false;
  }
  return true;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no, std::size_t field_no) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(line_no) + ": field " + std::to_string(field_no) +
                     " is not numeric: '" + s + "'");
  }
  return v;
}

int parse_label(const std::string& s, std::size_t line_no) {
  std::string t = s;
  if (!t.empty() && t.front() == '+') t.erase(t.begin());
  if (t == "1") return 1;
  if (t == "-1") return -1;
  throw ParseError("line " + std::to_string(line_no) + ": label must be -1 or 1, got '" + s +
                   "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

MILDataset load_bags(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open bag file: " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(path.string() + ": empty file (header row required)");
  }
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "bag_id" || header[1] != "label") {
    throw ParseError(path.string() + ": line 1: expected header 'bag_id,label,f0,...'");
  }
  const std::size_t d = header.size() - 2;

  MILDataset ds;
  ds.feature_dim = static_cast<int>(d);
  std::unordered_map<std::string, std::size_t> bag_index;
  // Instances collected per bag, packed into matrices at the end.
  std::vector<std::vector<Vector>> rows;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv(line);
    if (fields.size() != d + 2) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(d + 2) + " fields, got " + std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    const int label = parse_label(fields[1], line_no);
    Vector x(d);
    for (std::size_t j = 0; j < d; ++j) {
      x(static_cast<Index>(j)) = parse_double(fields[j + 2], line_no, j + 3);
    }
    auto it = bag_index.find(id);
    if (it == bag_index.end()) {
      bag_index.emplace(id, ds.bags.size());
      ds.bags.push_back(Bag{id, label, Matrix(), {}});
      rows.emplace_back();
      rows.back().push_back(std::move(x));
    } else {
      if (ds.bags[it->second].label != label) {
        throw ParseError("line " + std::to_string(line_no) + ": bag '" + id +
                         "' has conflicting labels");
      }
      rows[it->second].push_back(std::move(x));
    }
  }
  if (ds.bags.empty()) {
    throw ParseError(path.string() + ": no data rows");
  }
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    Matrix m(d, rows[i].size());
    for (std::size_t c = 0; c < rows[i].size(); ++c) m.col(static_cast<Index>(c)) = rows[i][c];
    ds.bags[i].instances = std::move(m);
  }
  return ds;
}

void save_bags(const MILDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write bag file: " + path.string());
  }
  out << "bag_id,label";
  for (int j = 0; j < dataset.feature_dim; ++j) out << ",f" << j;
  out << "\n";
  for (const auto& bag : dataset.bags) {
    for (Index c = 0; c < bag.instances.cols(); ++c) {
      out << bag.id << "," << bag.label;
      for (Index r = 0; r < bag.instances.rows(); ++r) {
        out << "," << format_double(bag.instances(r, c));
      }
      out << "\n";
    }
  }
  if (!out) {
    throw IoError("failed while writing bag file: " + path.string());
  }
}

Normalizer fit_normalizer(const MILDataset& train) {
  if (train.bags.empty()) {
    throw InvalidInputError("fit_normalizer: empty dataset");
  }
  Vector mn = Vector::Constant(train.feature_dim, std::numeric_limits<double>::infinity());
  Vector mx = Vector::Constant(train.feature_dim, -std::numeric_limits<double>::infinity());
  for (const auto& bag : train.bags) {
    mn = mn.cwiseMin(bag.instances.rowwise().minCoeff());
    mx = mx.cwiseMax(bag.instances.rowwise().maxCoeff());
  }
  return Normalizer{std::move(mn), std::move(mx)};
}

Matrix apply(const Normalizer& norm, const Matrix& x) {
  if (x.rows() != norm.min.size()) {
    throw InvalidShapeError("normalizer: feature dim mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double range = norm.max(r) - norm.min(r);
    if (range <= 0.0) {
      out.row(r).setConstant(0.5);
    } else {
      out.row(r) = ((x.row(r).array() - norm.min(r)) / range).max(0.0).min(1.0);
    }
  }
  return out;
}

Vector apply(const Normalizer& norm, const Vector& x) {
  return apply(norm, Matrix(x)).col(0);
}

MILDataset apply(const Normalizer& norm, const MILDataset& dataset) {
  MILDataset out = dataset;
  for (auto& bag : out.bags) bag.instances = apply(norm, bag.instances);
  return out;
}

FoldPlan stratified_kfold(const MILDataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) {
    throw InvalidFoldError("stratified_kfold: k must be >= 2");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
    (dataset.bags[i].label == 1 ? pos : neg).push_back(i);
  }
  if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k)) {
    throw InvalidFoldError("stratified_kfold: each class needs at least k bags (" +
                           std::to_string(pos.size()) + " positive, " +
                           std::to_string(neg.size()) + " negative, k=" + std::to_string(k) +
                           ")");
  }
  Rng rng(seed);
  shuffle(pos, rng);
  shuffle(neg, rng);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of_bag.assign(dataset.bags.size(), -1);
  // One continuous round-robin over positives then negatives keeps both the
  // per-class counts and the total fold sizes within one of each other.
  int f = 0;
  for (std::size_t i : pos) {
    plan.fold_of_bag[i] = f;
    f = (f + 1) % k;
  }
  for (std::size_t i : neg) {
    plan.fold_of_bag[i] = f;
    f = (f + 1) % k;
  }
  return plan;
}

MILDataset fold_subset(const MILDataset& dataset, const FoldPlan& plan, int fold,
                       bool train_part) {
  if (plan.fold_of_bag.size() != dataset.bags.size()) {
    throw InvalidFoldError("fold_subset: plan does not match dataset");
  }
  if (fold < 0 || fold >= plan.k) {
    throw InvalidFoldError("fold_subset: fold index out of range");
  }
  MILDataset out;
  out.feature_dim = dataset.feature_dim;
  for (std::size_t i = 0; i < dataset.bags.size(); ++i) {
    const bool in_fold = plan.fold_of_bag[i] == fold;
    if (in_fold != train_part) out.bags.push_back(dataset.bags[i]);
  }
  return out;
}

MILDataset synth_generate(const SynthConfig& config) {
  if (!(config.witness_rate > 0.0 && config.witness_rate <= 1.0)) {
    throw InvalidHyperparameterError("synth_generate: witness_rate must lie in (0,1]");
  }
  if (!(config.separation > 0.0)) {
    throw InvalidHyperparameterError("synth_generate: separation must be > 0");
  }
  if (config.n_bags < 2 || config.instances_per_bag < 1 || config.feature_dim < 1) {
    throw InvalidHyperparameterError("synth_generate: need >= 2 bags, >= 1 instance per bag, d >= 1");
  }
  const int d = config.feature_dim;
  const Vector shift =
      Vector::Constant(d, config.separation / std::sqrt(static_cast<double>(d)));

  Rng rng(config.seed);
  MILDataset ds;
  ds.feature_dim = d;
  const int n_pos = config.n_bags / 2;
  for (int b = 0; b < config.n_bags; ++b) {
    Bag bag;
    bag.id = "b" + std::to_string(b);
    bag.label = b < n_pos ? 1 : -1;
    const int m = config.instances_per_bag;
    std::vector<int> witness(m, 0);
    if (bag.label == 1) {
      int n_wit = 0;
      for (int i = 0; i < m; ++i) {
        witness[i] = rng.uniform() < config.witness_rate ? 1 : 0;
        n_wit += witness[i];
      }
      if (n_wit == 0) witness[static_cast<int>(rng.below(m))] = 1;
    }
    bag.instances = rng.gaussian(d, m, 1.0);
    bag.instance_labels.resize(m);
    for (int i = 0; i < m; ++i) {
      if (witness[i] == 1) bag.instances.col(i) += shift;
      bag.instance_labels[i] = witness[i] == 1 ? 1 : -1;
    }
    ds.bags.push_back(std::move(bag));
  }

  // MIL labeling rule must hold by construction.
  for (const auto& bag : ds.bags) {
    const bool any_pos =
        std::any_of(bag.instance_labels.begin(), bag.instance_labels.end(),
                    [](int y) { return y == 1; });
    if ((bag.label == 1) != any_pos) {
      throw Error("synth_generate: MIL labeling rule violated for bag " + bag.id);
    }
  }
  return ds;
}

}  // namespace milvae
