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

#include "milvae/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "milvae/bag.hpp"
#include "milvae/errors.hpp"
#include "milvae/mil.hpp"
#include "milvae/tape.hpp"

namespace milvae {

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kFdStep = 1e-5;

// Random weights big enough to give O(1) preactivations; the default
// 0.01-stddev init would leave every gradient at the finite-difference noise
// floor and check nothing.
void randomize_layers(const std::vector<DenseLayer*>& layers, Rng& rng) {
  for (DenseLayer* l : layers) {
    const double s = 0.9 / std::sqrt(static_cast<double>(l->in_dim()));
    l->weights = rng.gaussian(l->out_dim(), l->in_dim(), s);
    l->bias = rng.gaussian(l->out_dim(), 1, 0.1).col(0);
  }
}

void merge_worst(const GradCheckReport& r, GradCheckReport& total) {
  total.entries_checked += r.entries_checked;
  if (r.max_rel_err > total.max_rel_err) {
    total.max_rel_err = r.max_rel_err;
    total.worst_analytic = r.worst_analytic;
    total.worst_numeric = r.worst_numeric;
    total.worst_param = r.worst_param;
  }
}

}  // namespace

GradCheckReport gradcheck_layer_suite(Activation activation, int configs, std::uint64_t seed) {
  GradCheckReport total;
  for (int cfg = 0; cfg < configs; ++cfg) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(cfg)));
    const Index out = 1 + static_cast<Index>(rng.below(5));
    const Index in = 1 + static_cast<Index>(rng.below(5));
    const Index batch = 1 + static_cast<Index>(rng.below(3));
    DenseLayer layer = make_layer(out, in, activation, rng);
    std::vector<DenseLayer*> layers{&layer};
    randomize_layers(layers, rng);
    const Matrix x = rng.gaussian(in, batch, 1.0);
    const Matrix c = rng.gaussian(out, batch, 1.0);

    // Analytic path: tape. Numeric path: the plain forward, never backward.
    LayerGrad grad = zero_grad_like(layer);
    Tape tape;
    const Tape::ValueId y = tape.dense(layer, &grad, tape.constant(x));
    tape.backward(tape.sum_all(tape.cwise_product(y, tape.constant(c))));

    auto loss = [&]() { return forward(layer, x).cwiseProduct(c).sum(); };
    std::vector<const LayerGrad*> grads{&grad};
    merge_worst(finite_difference_check(layers, grads, loss, kFdStep), total);
  }
  return total;
}

GradCheckReport gradcheck_vae_suite(int configs, std::uint64_t seed) {
  GradCheckReport total;
  for (int cfg = 0; cfg < configs; ++cfg) {
    Rng rng(mix_seed(seed, 0x7AE + static_cast<std::uint64_t>(cfg)));
    const int d = 2 + static_cast<int>(rng.below(4));
    const int nz = 1 + static_cast<int>(rng.below(3));
    const std::vector<int> enc{3 + static_cast<int>(rng.below(3))};
    const std::vector<int> dec{3 + static_cast<int>(rng.below(3))};
    VaeParams vae = make_vae(d, nz, rng, LatentHead::kLinear, enc, dec);
    randomize_layers(vae.layers(), rng);
    const Index batch = 1 + static_cast<Index>(rng.below(2));
    Matrix x(d, batch);
    for (Index c = 0; c < batch; ++c) {
      for (Index r = 0; r < d; ++r) x(r, c) = 0.05 + 0.9 * rng.uniform();
    }
    const std::uint64_t noise_seed = rng.next_u64();
    const double dropout_rate = 0.25;

    auto eval = [&](VaeGrads* grads, Tape* out_tape) {
      // Fixed noise: dropout masks and reparameterization eps replay
      // identically under the reseeded stream.
      Rng noise(noise_seed);
      Tape local;
      Tape& tape = out_tape != nullptr ? *out_tape : local;
      const VaeGraph g =
          record_vae(tape, vae, grads, x, Mode::kTrain, dropout_rate, noise);
      const Tape::ValueId loss =
          tape.scale(tape.sum_all(g.loss_row), 1.0 / static_cast<double>(batch));
      if (out_tape != nullptr) tape.backward(loss);
      return tape.value(loss)(0, 0);
    };

    VaeGrads grads = zero_grads_like(vae);
    Tape tape;
    eval(&grads, &tape);
    std::vector<const LayerGrad*> grad_ptrs;
    for (const auto& g : grads.layers) grad_ptrs.push_back(&g);
    auto loss = [&]() { return eval(nullptr, nullptr); };
    merge_worst(finite_difference_check(vae.layers(), grad_ptrs, loss, kFdStep), total);
  }
  return total;
}

GradCheckReport gradcheck_joint_suite(int configs, std::uint64_t seed) {
  GradCheckReport total;
  for (int cfg = 0; cfg < configs; ++cfg) {
    Rng rng(mix_seed(seed, 0x901A17 + static_cast<std::uint64_t>(cfg)));
    const int d = 2 + static_cast<int>(rng.below(3));
    const int nz = 1 + static_cast<int>(rng.below(2));
    MilModel model;
    model.vae_pm = make_vae(d, nz, rng, LatentHead::kLinear, {4}, {4});
    model.vae_neg = make_vae(d, nz, rng, LatentHead::kLinear, {4}, {4});
    model.clf.push_back(make_layer(3, 2 * nz, Activation::kRelu, rng));
    model.clf.push_back(make_layer(2, 3, Activation::kSoftmax, rng));
    model.weight_calib_m = 1.0;

    std::vector<DenseLayer*> layers;
    for (auto* l : model.vae_pm.layers()) layers.push_back(l);
    for (auto* l : model.vae_neg.layers()) layers.push_back(l);
    for (auto* l : model.clf_layers()) layers.push_back(l);
    randomize_layers(layers, rng);

    const Index batch = 2;
    Matrix xa(d, batch), xn(d, batch);
    for (Index c = 0; c < batch; ++c) {
      for (Index r = 0; r < d; ++r) {
        xa(r, c) = 0.05 + 0.9 * rng.uniform();
        xn(r, c) = 0.05 + 0.9 * rng.uniform();
      }
    }
    const std::vector<int> targets{1, 0};
    Vector weights(2);
    weights << 0.3 + 0.6 * rng.uniform(), 1.0;  // target=1 weighted, target=0 fixed at 1
    const double clf_w = 0.5 + rng.uniform();
    const std::uint64_t noise_seed = rng.next_u64();
    const double dropout_rate = 0.25;

    auto eval = [&](VaeGrads* gp, VaeGrads* gn, std::vector<LayerGrad>* gc, Tape* out_tape) {
      Rng noise(noise_seed);
      Tape local;
      Tape& tape = out_tape != nullptr ? *out_tape : local;
      const JointGraph g = record_joint(tape, model, gp, gn, gc, xa, xn, targets, weights,
                                        clf_w, Mode::kTrain, dropout_rate, noise);
      if (out_tape != nullptr) tape.backward(g.mean_loss);
      return tape.value(g.mean_loss)(0, 0);
    };

    VaeGrads g_pm = zero_grads_like(model.vae_pm);
    VaeGrads g_ng = zero_grads_like(model.vae_neg);
    std::vector<LayerGrad> g_clf;
    for (const auto& l : model.clf) g_clf.push_back(zero_grad_like(l));
    Tape tape;
    eval(&g_pm, &g_ng, &g_clf, &tape);

    std::vector<const LayerGrad*> grad_ptrs;
    for (const auto& g : g_pm.layers) grad_ptrs.push_back(&g);
    for (const auto& g : g_ng.layers) grad_ptrs.push_back(&g);
    for (const auto& g : g_clf) grad_ptrs.push_back(&g);
    auto loss = [&]() { return eval(nullptr, nullptr, nullptr, nullptr); };
    merge_worst(finite_difference_check(layers, grad_ptrs, loss, kFdStep), total);
  }
  return total;
}

double mc_kl_to_prior(const LatentPosterior& post, int samples, std::uint64_t seed) {
  Rng rng(seed);
  const Index nz = post.mu.size();
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    double diff = 0.0;
    for (Index i = 0; i < nz; ++i) {
      const double eps = rng.normal();
      const double z = post.mu(i) + std::exp(0.5 * post.logvar(i)) * eps;
      // log q - log p with the 2*pi terms cancelling.
      diff += 0.5 * (z * z - eps * eps - post.logvar(i));
    }
    acc += diff;
  }
  return acc / static_cast<double>(samples);
}

double mc_gaussian_kl(const LatentPosterior& from, const LatentPosterior& to, int samples,
                      std::uint64_t seed) {
  Rng rng(seed);
  const Index nz = from.mu.size();
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    double diff = 0.0;
    for (Index i = 0; i < nz; ++i) {
      const double eps = rng.normal();
      const double z = from.mu(i) + std::exp(0.5 * from.logvar(i)) * eps;
      const double dz = z - to.mu(i);
      diff += 0.5 * (dz * dz * std::exp(-to.logvar(i)) + to.logvar(i) -
                     eps * eps - from.logvar(i));
    }
    acc += diff;
  }
  return acc / static_cast<double>(samples);
}

namespace {

std::string fmt2(double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "observed %.9g, expected %.9g", a, b);
  return buf;
}

CheckResult grad_result(const std::string& name, const GradCheckReport& r) {
  CheckResult c;
  c.name = name;
  c.pass = r.pass(kGradTol);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max rel err %.3g over %d entries (worst %s: %.6g vs %.6g)",
                r.max_rel_err, r.entries_checked, r.worst_param.c_str(), r.worst_analytic,
                r.worst_numeric);
  c.detail = buf;
  return c;
}

LatentPosterior random_posterior(Rng& rng, Index nz, double min_kl) {
  for (;;) {
    LatentPosterior p;
    p.mu = Vector::NullaryExpr(nz, [&](Index) { return -1.5 + 3.0 * rng.uniform(); });
    p.logvar = Vector::NullaryExpr(nz, [&](Index) { return -1.0 + 1.7 * rng.uniform(); });
    if (kl_to_prior(p) >= min_kl) return p;
  }
}

}  // namespace

std::vector<CheckResult> run_selfcheck(bool inject_fault) {
  std::vector<CheckResult> results;
  const std::uint64_t seed = 20260811;
  constexpr int kConfigs = 100;

  results.push_back(
      grad_result("gradcheck/layer/linear", gradcheck_layer_suite(Activation::kLinear, kConfigs, seed)));
  results.push_back(
      grad_result("gradcheck/layer/relu", gradcheck_layer_suite(Activation::kRelu, kConfigs, seed + 1)));
  results.push_back(grad_result("gradcheck/layer/sigmoid",
                                gradcheck_layer_suite(Activation::kSigmoid, kConfigs, seed + 2)));
  results.push_back(grad_result("gradcheck/layer/softmax",
                                gradcheck_layer_suite(Activation::kSoftmax, kConfigs, seed + 3)));
  results.push_back(grad_result("gradcheck/vae_loss", gradcheck_vae_suite(kConfigs, seed + 4)));
  results.push_back(grad_result("gradcheck/joint_loss", gradcheck_joint_suite(kConfigs, seed + 5)));

  {
    Rng rng(seed + 6);
    constexpr int kSamples = 1000000;
    bool pass = true;
    std::string detail;
    for (int i = 0; i < 3; ++i) {
      const LatentPosterior p = random_posterior(rng, 2 + static_cast<Index>(i % 2), 0.5);
      const double closed = kl_to_prior(p);
      const double mc = mc_kl_to_prior(p, kSamples, mix_seed(seed, 100 + i));
      if (std::abs(closed - mc) / closed >= 0.01) {
        pass = false;
        detail = fmt2(mc, closed);
        break;
      }
    }
    results.push_back({"kl_to_prior_vs_monte_carlo", pass, detail});
  }
  {
    Rng rng(seed + 7);
    constexpr int kSamples = 1000000;
    bool pass = true;
    std::string detail;
    for (int i = 0; i < 3; ++i) {
      const Index nz = 2 + static_cast<Index>(i % 2);
      const LatentPosterior a = random_posterior(rng, nz, 0.3);
      const LatentPosterior b = random_posterior(rng, nz, 0.3);
      const double closed = gaussian_kl(a, b);
      if (closed < 0.3) continue;
      const double mc = mc_gaussian_kl(a, b, kSamples, mix_seed(seed, 200 + i));
      if (std::abs(closed - mc) / closed >= 0.01) {
        pass = false;
        detail = fmt2(mc, closed);
        break;
      }
    }
    results.push_back({"gaussian_kl_vs_monte_carlo", pass, detail});
  }
  {
    // Unit-covariance reduction: with both logvars at zero the KL collapses
    // to half the squared distance between the means.
    Rng rng(seed + 8);
    bool pass = true;
    std::string detail;
    for (int i = 0; i < 50; ++i) {
      const Index nz = 1 + static_cast<Index>(rng.below(6));
      LatentPosterior a, b;
      a.mu = rng.gaussian(nz, 1, 2.0).col(0);
      b.mu = rng.gaussian(nz, 1, 2.0).col(0);
      a.logvar = Vector::Zero(nz);
      b.logvar = Vector::Zero(nz);
      const double kl = gaussian_kl(a, b);
      const double reduced = 0.5 * (a.mu - b.mu).squaredNorm();
      if (std::abs(kl - reduced) > 1e-12 * std::max(1.0, reduced)) {
        pass = false;
        detail = fmt2(kl, reduced);
        break;
      }
    }
    results.push_back({"gaussian_kl_unit_covariance_reduction", pass, detail});
  }
  {
    // Pooling against a per-entry scalar loop.
    Rng rng(seed + 9);
    const Matrix latents = rng.gaussian(3, 7, 1.5);
    const BagFeature f = pool_bag(latents);
    bool pass = true;
    std::string detail;
    for (Index r = 0; r < 3 && pass; ++r) {
      double mn = latents(r, 0), mx = latents(r, 0), sum = 0.0;
      for (Index c = 0; c < 7; ++c) {
        mn = std::min(mn, latents(r, c));
        mx = std::max(mx, latents(r, c));
        sum += latents(r, c);
      }
      const double mean = sum / 7.0;
      double var = 0.0;
      for (Index c = 0; c < 7; ++c) var += (latents(r, c) - mean) * (latents(r, c) - mean);
      const double sd = std::sqrt(var / 7.0);
      const double got[4] = {f.values(r), f.values(3 + r), f.values(6 + r), f.values(9 + r)};
      const double want[4] = {mn, mx, mean, sd};
      for (int j = 0; j < 4; ++j) {
        if (std::abs(got[j] - want[j]) > 1e-12) {
          pass = false;
          detail = fmt2(got[j], want[j]);
        }
      }
    }
    results.push_back({"bag_pooling_vs_scalar_oracle", pass, detail});
  }
  {
    Rng rng(seed + 10);
    const Matrix x = rng.gaussian(5, 4, 2.0);
    const Matrix r1 = apply_activation(Activation::kRelu, x);
    const Matrix r2 = apply_activation(Activation::kRelu, r1);
    const Matrix s = apply_activation(Activation::kSigmoid, x);
    const Matrix sm = apply_activation(Activation::kSoftmax, x);
    bool pass = (r1 - r2).cwiseAbs().maxCoeff() == 0.0;
    pass = pass && (s.array() > 0.0).all() && (s.array() < 1.0).all();
    for (Index c = 0; c < sm.cols(); ++c) {
      pass = pass && std::abs(sm.col(c).sum() - 1.0) < 1e-12;
    }
    results.push_back({"activation_invariants", pass, ""});
  }
  {
    // Hand-computed single RMSprop step.
    Matrix p = Matrix::Zero(1, 1), g = Matrix::Constant(1, 1, 1.0), acc = Matrix::Zero(1, 1);
    rmsprop_update(p, g, acc, 0.1, 0.9, 1e-8);
    const double want_acc = 0.1;
    const double want_p = -0.1 / (std::sqrt(0.1) + 1e-8);
    const bool pass =
        std::abs(acc(0, 0) - want_acc) < 1e-15 && std::abs(p(0, 0) - want_p) < 1e-15;
    results.push_back({"rmsprop_hand_step", pass, fmt2(p(0, 0), want_p)});
  }
  {
    // Bernoulli cross entropy at x = xhat = 0.5 is exactly log 2 per dim.
    const Vector x = Vector::Constant(3, 0.5);
    const double got = recon_loss(x, x);
    const double want = 3.0 * std::log(2.0);
    results.push_back(
        {"recon_loss_half_point", std::abs(got - want) < 1e-12, fmt2(got, want)});
  }

  if (inject_fault) {
    // Negative control: corrupt one analytic gradient entry and require the
    // checker to notice.
    Rng rng(seed + 11);
    DenseLayer layer = make_layer(3, 3, Activation::kSigmoid, rng);
    std::vector<DenseLayer*> layers{&layer};
    randomize_layers(layers, rng);
    const Matrix x = rng.gaussian(3, 2, 1.0);
    const Matrix c = rng.gaussian(3, 2, 1.0);
    LayerGrad grad = zero_grad_like(layer);
    Tape tape;
    const Tape::ValueId y = tape.dense(layer, &grad, tape.constant(x));
    tape.backward(tape.sum_all(tape.cwise_product(y, tape.constant(c))));
    grad.weights(0, 0) += 0.5;  // the injected fault
    auto loss = [&]() { return forward(layer, x).cwiseProduct(c).sum(); };
    std::vector<const LayerGrad*> grads{&grad};
    const GradCheckReport r = finite_difference_check(layers, grads, loss, kFdStep);
    results.push_back(grad_result("injected_gradient_fault", r));
  }

  return results;
}

}  // namespace milvae
