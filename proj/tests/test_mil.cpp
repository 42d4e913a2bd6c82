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

#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "milvae/errors.hpp"
#include "milvae/mil.hpp"
#include "milvae/selfcheck.hpp"
#include "milvae/serialize.hpp"
#include "milvae/tape.hpp"
#include "oracles.hpp"

using namespace milvae;
namespace fs = std::filesystem;

namespace {

// Small everything: quick to fit, still exercises the full graph.
TrainConfig small_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.latent_dim = 2;
  tc.epochs = 12;
  tc.pair_multiplier = 2;
  tc.encoder_hidden = {16, 8};
  tc.decoder_hidden = {8, 16};
  tc.clf_hidden = {8};
  tc.seed = seed;
  return tc;
}

MILDataset small_synth(std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.n_bags = 24;
  sc.instances_per_bag = 6;
  sc.feature_dim = 8;
  sc.separation = 4.0;
  sc.seed = seed;
  return synth_generate(sc);
}

MILDataset negatives_only(int n_bags) {
  SynthConfig sc;
  sc.n_bags = n_bags * 2;
  sc.instances_per_bag = 4;
  sc.feature_dim = 5;
  MILDataset ds = synth_generate(sc);
  MILDataset out;
  out.feature_dim = ds.feature_dim;
  for (auto& b : ds.bags) {
    if (b.label == -1) out.bags.push_back(b);
  }
  return out;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("sample_pairs: counts, targets and determinism") {
  const MILDataset ds = small_synth();
  Rng rng(8);
  const auto pairs = sample_pairs(ds, 4, rng);
  CHECK(pairs.size() == 4 * static_cast<std::size_t>(ds.total_instances()));

  // Empirical positive-target rate tracks the positive-instance fraction.
  Index pos_instances = 0;
  for (const auto& b : ds.bags) {
    if (b.label == 1) pos_instances += b.instances.cols();
  }
  const double p = static_cast<double>(pos_instances) / ds.total_instances();
  double rate = 0.0;
  for (const auto& pr : pairs) {
    rate += pr.target;
    CHECK(pr.weight == 1.0);
  }
  rate /= static_cast<double>(pairs.size());
  const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(pairs.size()));
  CHECK(std::abs(rate - p) < 3.0 * sigma);

  Rng rng2(8);
  const auto pairs2 = sample_pairs(ds, 4, rng2);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].target == pairs2[i].target);
    CHECK(pairs[i].x_any == pairs2[i].x_any);
    CHECK(pairs[i].x_neg == pairs2[i].x_neg);
  }
}

TEST_CASE("sample_pairs: all-negative data yields target 0 everywhere") {
  const MILDataset ds = negatives_only(6);
  Rng rng(9);
  for (const auto& p : sample_pairs(ds, 2, rng)) {
    CHECK(p.target == 0);
  }
}

TEST_CASE("sample_pairs: no negative bags is unsatisfiable") {
  SynthConfig sc;
  sc.n_bags = 6;
  sc.witness_rate = 1.0;
  sc.feature_dim = 3;
  MILDataset ds = synth_generate(sc);
  MILDataset pos_only;
  pos_only.feature_dim = ds.feature_dim;
  for (auto& b : ds.bags) {
    if (b.label == 1) pos_only.bags.push_back(b);
  }
  Rng rng(10);
  CHECK_THROWS_AS(sample_pairs(pos_only, 2, rng), UnsatisfiablePairingError);
}

TEST_CASE("weight_from_error: endpoints, midpoint, monotonicity") {
  CHECK(weight_from_error(0.0, 2.0) == 0.0);
  CHECK(weight_from_error(2.0, 2.0) == 0.5);
  CHECK_THROWS_AS(weight_from_error(1.0, 0.0), UncalibratedModelError);
  CHECK_THROWS_AS(weight_from_error(1.0, -1.0), UncalibratedModelError);

  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double m = 0.1 + 3.0 * rng.uniform();
    double e1 = 5.0 * rng.uniform();
    double e2 = 5.0 * rng.uniform();
    if (e1 == e2) continue;
    if (e1 > e2) std::swap(e1, e2);
    const double w1 = weight_from_error(e1, m);
    const double w2 = weight_from_error(e2, m);
    CHECK(w1 < w2);
    CHECK(w1 >= 0.0);
    CHECK(w2 < 1.0);
  }
}

TEST_CASE("sample_weight composes the recon error with the calibration") {
  const MILDataset ds = small_synth(3);
  const TrainConfig tc = small_config(21);
  const MilModel model = init_mil_model(ds, tc);
  const MILDataset nds = apply(model.normalizer, ds);
  const Vector x = nds.bags[0].instances.col(0);
  const double e = reconstruction_error(model.vae_neg, x);
  const double w = sample_weight(x, model.vae_neg, 1.5);
  CHECK(w == weight_from_error(e, 1.5));
  CHECK(w >= 0.0);
  CHECK(w < 1.0);
  CHECK_THROWS_AS(sample_weight(x, model.vae_neg, 0.0), UncalibratedModelError);
}

TEST_CASE("discriminate: zero classifier is uniform; outputs sum to one") {
  const MILDataset ds = small_synth(4);
  TrainConfig tc = small_config(22);
  MilModel model = init_mil_model(ds, tc);
  for (DenseLayer* l : model.clf_layers()) {
    l->weights.setZero();
    l->bias.setZero();
  }
  const Vector mu = Vector::Constant(2, 0.3);
  const Vector probs = discriminate(model, mu, mu);
  CHECK(probs.size() == 2);
  CHECK(probs(0) == 0.5);
  CHECK(probs(1) == 0.5);

  Rng rng(23);
  MilModel model2 = init_mil_model(ds, tc);
  for (DenseLayer* l : model2.clf_layers()) {
    l->weights = rng.gaussian(l->out_dim(), l->in_dim(), 0.8);
  }
  for (int i = 0; i < 20; ++i) {
    const Vector a = rng.gaussian(2, 1, 1.0).col(0);
    const Vector b = rng.gaussian(2, 1, 1.0).col(0);
    const Vector p = discriminate(model2, a, b);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(discriminate(model2, Vector::Zero(3), Vector::Zero(2)), InvalidShapeError);
}

TEST_CASE("classifier gradients match finite differences with frozen VAEs") {
  Rng rng(24);
  MilModel model;
  model.vae_pm = make_vae(4, 2, rng, LatentHead::kLinear, {5}, {5});
  model.vae_neg = make_vae(4, 2, rng, LatentHead::kLinear, {5}, {5});
  model.clf.push_back(make_layer(4, 4, Activation::kRelu, rng));
  model.clf.push_back(make_layer(2, 4, Activation::kSoftmax, rng));
  for (DenseLayer* l : model.clf_layers()) {
    l->weights = rng.gaussian(l->out_dim(), l->in_dim(), 0.8);
    l->bias = rng.gaussian(l->out_dim(), 1, 0.1).col(0);
  }
  Matrix xa(4, 2), xn(4, 2);
  for (Index c = 0; c < 2; ++c) {
    for (Index r = 0; r < 4; ++r) {
      xa(r, c) = rng.uniform();
      xn(r, c) = rng.uniform();
    }
  }
  const std::vector<int> targets{1, 0};
  Vector weights(2);
  weights << 0.6, 1.0;
  const std::uint64_t noise_seed = 555;

  auto eval = [&](std::vector<LayerGrad>* gc, Tape* out) {
    Rng noise(noise_seed);
    Tape local;
    Tape& tape = out != nullptr ? *out : local;
    const JointGraph g = record_joint(tape, model, nullptr, nullptr, gc, xa, xn, targets,
                                      weights, 1.0, Mode::kTrain, 0.25, noise);
    // Only the weighted classifier term: the VAE losses do not depend on the
    // classifier weights anyway.
    const Tape::ValueId obj = tape.sum_all(g.weighted_ce);
    if (out != nullptr) tape.backward(obj);
    return tape.value(obj)(0, 0);
  };
  std::vector<LayerGrad> g_clf;
  for (const auto& l : model.clf) g_clf.push_back(zero_grad_like(l));
  Tape tape;
  eval(&g_clf, &tape);
  std::vector<const LayerGrad*> grads;
  for (const auto& g : g_clf) grads.push_back(&g);
  auto loss = [&]() { return eval(nullptr, nullptr); };
  const GradCheckReport r = finite_difference_check(model.clf_layers(), grads, loss, 1e-5);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("joint_loss: weight 0 drops the classifier term exactly") {
  const MILDataset ds = small_synth(5);
  const TrainConfig tc = small_config(25);
  const MilModel model = init_mil_model(ds, tc);
  const MILDataset nds = apply(model.normalizer, ds);

  TrainingPair pair;
  pair.x_any = nds.bags[0].instances.col(0);
  pair.x_neg = nds.bags[20].instances.col(1);
  pair.target = 1;
  pair.weight = 0.0;
  Rng rng(26);
  const JointLossBreakdown b = joint_loss(model, pair, Mode::kInfer, 0.0, 1.0, rng);
  CHECK(b.clf == 0.0);
  CHECK(b.total == b.vae_pm + b.vae_neg);

  pair.weight = 0.7;
  Rng rng2(26);
  const JointLossBreakdown b2 = joint_loss(model, pair, Mode::kInfer, 0.0, 1.0, rng2);
  CHECK(b2.clf > 0.0);
  CHECK(std::abs(b2.total - (b2.vae_pm + b2.vae_neg + b2.clf)) < 1e-12);
}

TEST_CASE("full joint gradients pass the finite-difference suite") {
  const GradCheckReport r = gradcheck_joint_suite(8, 271828);
  CHECK(r.entries_checked > 0);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("fit: degenerate configurations are rejected") {
  const MILDataset ds = small_synth(6);
  TrainConfig tc = small_config(27);
  tc.epochs = 0;
  CHECK_THROWS_AS(fit(ds, tc), UncalibratedModelError);

  const MILDataset neg = negatives_only(8);
  CHECK_THROWS_AS(fit(neg, small_config(28)), UnsatisfiablePairingError);
}

TEST_CASE("fit: loss decreases on the two-cluster dataset and m calibrates") {
  const MILDataset ds = small_synth(7);
  const FitResult r = fit(ds, small_config(29));
  REQUIRE(!r.history.joint_loss.empty());
  CHECK(r.history.joint_loss.back() < r.history.joint_loss.front());
  CHECK(r.model.weight_calib_m > 0.0);
  // Loss additivity of the reported components, every epoch.
  for (std::size_t e = 0; e < r.history.joint_loss.size(); ++e) {
    const double sum =
        r.history.vae_pm_loss[e] + r.history.vae_neg_loss[e] + r.history.clf_loss[e];
    CHECK(std::abs(sum - r.history.joint_loss[e]) < 1e-9);
  }
}

TEST_CASE("fit: separation proxy grows from initialization") {
  const MILDataset ds = small_synth(8);
  const TrainConfig tc = small_config(30);
  const double before = separation_proxy(init_mil_model(ds, tc), ds);
  const FitResult r = fit(ds, tc);
  const double after = separation_proxy(r.model, ds);
  CHECK(before >= 0.0);
  CHECK(after > before);
}

TEST_CASE("fit is bit-deterministic: identical model files") {
  const MILDataset ds = small_synth(9);
  TrainConfig tc = small_config(31);
  tc.epochs = 8;
  const fs::path dir = fs::temp_directory_path() / "milvae_tests";
  fs::create_directories(dir);
  const fs::path p1 = dir / "fit_a.bin";
  const fs::path p2 = dir / "fit_b.bin";
  save_model(fit(ds, tc).model, p1);
  save_model(fit(ds, tc).model, p2);
  const std::string b1 = file_bytes(p1);
  const std::string b2 = file_bytes(p2);
  REQUIRE(!b1.empty());
  CHECK(b1 == b2);
}

TEST_CASE("model save/load round-trip") {
  const MILDataset ds = small_synth(10);
  TrainConfig tc = small_config(32);
  tc.epochs = 4;
  const MilModel model = fit(ds, tc).model;
  const fs::path dir = fs::temp_directory_path() / "milvae_tests";
  fs::create_directories(dir);
  const fs::path p = dir / "roundtrip.bin";
  save_model(model, p);
  const MilModel back = load_model(p);
  CHECK(back.input_dim() == model.input_dim());
  CHECK(back.latent_dim() == model.latent_dim());
  CHECK(back.weight_calib_m == model.weight_calib_m);
  CHECK(back.normalizer.min == model.normalizer.min);
  CHECK(back.vae_pm.encoder[0].weights == model.vae_pm.encoder[0].weights);
  CHECK(back.clf.back().weights == model.clf.back().weights);

  // Re-saving the loaded model reproduces the bytes.
  const fs::path p2 = dir / "roundtrip2.bin";
  save_model(back, p2);
  CHECK(file_bytes(p) == file_bytes(p2));

  // Corrupt magic -> ParseError.
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTAMODEL";
  }
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), ParseError);

  // The relu-mu head survives the container.
  TrainConfig rtc = small_config(34);
  rtc.epochs = 4;
  rtc.latent_head = LatentHead::kReluMu;
  const MilModel rm = fit(small_synth(12), rtc).model;
  const fs::path rp = dir / "relu_mu.bin";
  save_model(rm, rp);
  const MilModel rback = load_model(rp);
  CHECK(rback.vae_pm.latent_head == LatentHead::kReluMu);
  CHECK(rback.vae_pm.mu_head.activation == Activation::kRelu);
  CHECK(rback.vae_pm.logvar_head.activation == Activation::kLinear);
}

TEST_CASE("init_mil_model is deterministic and shape-consistent") {
  const MILDataset ds = small_synth(11);
  const TrainConfig tc = small_config(33);
  const MilModel a = init_mil_model(ds, tc);
  const MilModel b = init_mil_model(ds, tc);
  CHECK(a.vae_pm.encoder[0].weights == b.vae_pm.encoder[0].weights);
  CHECK(a.vae_neg.decoder.back().weights == b.vae_neg.decoder.back().weights);
  CHECK(a.clf[0].weights == b.clf[0].weights);
  CHECK(a.weight_calib_m == 0.0);

  // Both VAEs share the declared shape; the classifier reads 2*nz inputs.
  CHECK(a.vae_pm.encoder[0].weights.rows() == a.vae_neg.encoder[0].weights.rows());
  CHECK(a.clf[0].in_dim() == 2 * tc.latent_dim);
}
