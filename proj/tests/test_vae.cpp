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

#include <doctest.h>

#include "milvae/data.hpp"
#include "milvae/errors.hpp"
#include "milvae/selfcheck.hpp"
#include "milvae/vae.hpp"
#include "oracles.hpp"

using namespace milvae;

namespace {

void zero_all(VaeParams& p) {
  for (DenseLayer* l : p.layers()) {
    l->weights.setZero();
    l->bias.setZero();
  }
}

VaeParams small_random_vae(std::uint64_t seed, int d = 5, int nz = 2,
                           LatentHead head = LatentHead::kLinear) {
  Rng rng(seed);
  VaeParams p = make_vae(d, nz, rng, head, {6, 4}, {4, 6});
  for (DenseLayer* l : p.layers()) {
    l->weights = rng.gaussian(l->out_dim(), l->in_dim(), 0.8 / std::sqrt(double(l->in_dim())));
    l->bias = rng.gaussian(l->out_dim(), 1, 0.1).col(0);
  }
  return p;
}

}  // namespace

TEST_CASE("encode: zero network maps everything to the prior") {
  Rng rng(3);
  VaeParams p = make_vae(4, 3, rng, LatentHead::kLinear, {5}, {5});
  zero_all(p);
  const Vector x = Vector::Constant(4, 0.7);
  const LatentPosterior post = encode(p, x);
  CHECK(post.mu == Vector::Zero(3));
  CHECK(post.logvar == Vector::Zero(3));
  CHECK(post.mu.size() == 3);
  CHECK(post.logvar.size() == 3);
}

TEST_CASE("encode/decode match a layer-by-layer oracle composition") {
  const VaeParams p = small_random_vae(11);
  Rng rng(12);
  const Vector x = Vector::NullaryExpr(5, [&](Index) { return rng.uniform(); });

  Vector h = x;
  for (const auto& l : p.encoder) h = oracle::dense_forward(l, h);
  const Vector mu_want = oracle::dense_forward(p.mu_head, h);
  const Vector lv_want = oracle::dense_forward(p.logvar_head, h);
  const LatentPosterior post = encode(p, x);
  CHECK((post.mu - mu_want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((post.logvar - lv_want).cwiseAbs().maxCoeff() < 1e-12);

  Vector z = mu_want;
  for (const auto& l : p.decoder) z = oracle::dense_forward(l, z);
  const Vector xhat = decode(p, mu_want);
  CHECK((xhat - z).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(xhat.size() == 5);
  CHECK((xhat.array() > 0.0).all());
  CHECK((xhat.array() < 1.0).all());
}

TEST_CASE("encode rejects wrong input dims") {
  const VaeParams p = small_random_vae(13);
  const Vector bad_x = Vector::Zero(4);
  CHECK_THROWS_AS(encode(p, bad_x), InvalidShapeError);
  const Vector bad_z = Vector::Zero(3);
  CHECK_THROWS_AS(decode(p, bad_z), InvalidShapeError);
}

TEST_CASE("relu-mu head rectifies the posterior mean") {
  const VaeParams p = small_random_vae(14, 5, 3, LatentHead::kReluMu);
  Rng rng(15);
  for (int i = 0; i < 20; ++i) {
    const Vector x = Vector::NullaryExpr(5, [&](Index) { return rng.uniform(); });
    const LatentPosterior post = encode(p, x);
    CHECK((post.mu.array() >= 0.0).all());
  }
}

TEST_CASE("reparameterize: degenerate variance collapses to mu") {
  Rng rng(16);
  LatentPosterior post;
  post.mu = rng.gaussian(4, 1, 1.0).col(0);
  post.logvar = Vector::Constant(4, -50.0);
  const Vector z = reparameterize(post, rng);
  CHECK((z - post.mu).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("reparameterize: standard posterior has unit moments") {
  Rng rng(17);
  LatentPosterior post;
  post.mu = Vector::Zero(1);
  post.logvar = Vector::Zero(1);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = reparameterize(post, rng)(0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("reparameterize is deterministic per seed") {
  LatentPosterior post;
  post.mu = Vector::Constant(3, 0.5);
  post.logvar = Vector::Constant(3, -0.2);
  Rng a(99), b(99);
  CHECK(reparameterize(post, a) == reparameterize(post, b));
}

TEST_CASE("decode: zero network outputs 0.5 everywhere") {
  Rng rng(18);
  VaeParams p = make_vae(6, 2, rng, LatentHead::kLinear, {4}, {4});
  zero_all(p);
  const Vector z_in = Vector::Ones(2);
  const Vector xhat = decode(p, z_in);
  CHECK((xhat - Vector::Constant(6, 0.5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kl_to_prior: closed form") {
  LatentPosterior post;
  post.mu = Vector::Zero(2);
  post.logvar = Vector::Zero(2);
  CHECK(kl_to_prior(post) == 0.0);

  post.mu << 1.0, 0.0;
  CHECK(std::abs(kl_to_prior(post) - 0.5) < 1e-15);
}

TEST_CASE("kl_to_prior matches a Monte-Carlo estimate") {
  Rng rng(19);
  LatentPosterior post;
  post.mu = Vector::NullaryExpr(3, [&](Index) { return -1.5 + 3.0 * rng.uniform(); });
  post.logvar = Vector::NullaryExpr(3, [&](Index) { return -1.0 + 1.5 * rng.uniform(); });
  if (kl_to_prior(post) < 0.5) post.mu(0) += 2.0;
  const double closed = kl_to_prior(post);
  const double mc = oracle::mc_kl(post, post, /*to_prior=*/true, 1000000, 4242);
  CHECK(std::abs(closed - mc) / closed < 0.01);
}

TEST_CASE("recon_loss: pinned values and the scalar oracle") {
  // Perfect reconstruction of a {0,1} vector costs only the clip epsilon.
  Vector x(4);
  x << 0.0, 1.0, 1.0, 0.0;
  const double at_clip = recon_loss(x, x);
  CHECK(std::abs(at_clip - 4.0 * (-std::log(1.0 - 1e-7))) < 1e-18);
  CHECK(at_clip < 1e-5);

  const Vector half = Vector::Constant(1, 0.5);
  CHECK(std::abs(recon_loss(half, half) - std::log(2.0)) < 1e-15);

  Rng rng(20);
  const Vector xr = Vector::NullaryExpr(8, [&](Index) { return rng.uniform(); });
  const Vector xh = Vector::NullaryExpr(8, [&](Index) { return rng.uniform(); });
  CHECK(std::abs(recon_loss(xr, xh) - oracle::recon_loss(xr, xh)) < 1e-12);
}

TEST_CASE("recon_loss rejects out-of-range targets") {
  CHECK_THROWS_AS(recon_loss(Vector::Constant(2, 1.2), Vector::Constant(2, 0.5)),
                  InvalidInputError);
  CHECK_THROWS_AS(recon_loss(Vector::Constant(2, -0.1), Vector::Constant(2, 0.5)),
                  InvalidInputError);
}

TEST_CASE("recon_loss is minimized at xhat = x") {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector x = Vector::NullaryExpr(6, [&](Index) { return 0.05 + 0.9 * rng.uniform(); });
    const double base = recon_loss(x, x);
    Vector xp = x;
    const Index i = static_cast<Index>(rng.below(6));
    const double delta = (rng.uniform() - 0.5) * 0.2;
    xp(i) = std::min(1.0 - 1e-6, std::max(1e-6, xp(i) + delta));
    if (xp(i) != x(i)) {
      CHECK(recon_loss(x, xp) > base);
    }
  }
}

TEST_CASE("vae_loss: zero network on the half-point input") {
  Rng rng(22);
  VaeParams p = make_vae(7, 2, rng, LatentHead::kLinear, {4}, {4});
  zero_all(p);
  const Vector x = Vector::Constant(7, 0.5);
  Rng noise(1);
  const VaeLossBreakdown b = vae_loss(p, x, Mode::kInfer, 0.0, noise);
  CHECK(b.kl == 0.0);
  CHECK(std::abs(b.recon - 7.0 * std::log(2.0)) < 1e-12);
  CHECK(b.total == b.kl + b.recon);
}

TEST_CASE("vae_loss breakdown always sums") {
  const VaeParams p = small_random_vae(23);
  Rng rng(24);
  for (int i = 0; i < 10; ++i) {
    const Vector x = Vector::NullaryExpr(5, [&](Index) { return rng.uniform(); });
    const VaeLossBreakdown b = vae_loss(p, x, Mode::kTrain, 0.25, rng);
    CHECK(b.total == b.kl + b.recon);
    CHECK(b.kl >= 0.0);
    CHECK(b.recon >= 0.0);
  }
}

TEST_CASE("vae loss gradients pass the finite-difference suite") {
  const GradCheckReport r = gradcheck_vae_suite(10, 31337);
  CHECK(r.entries_checked > 0);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("gaussian_kl: identity, reduction and Monte Carlo") {
  Rng rng(25);
  LatentPosterior a, b;
  a.mu = rng.gaussian(3, 1, 1.0).col(0);
  a.logvar = rng.gaussian(3, 1, 0.5).col(0);
  CHECK(gaussian_kl(a, a) == 0.0);

  // Unit-covariance reduction: logvars at zero -> half squared distance.
  a.logvar = Vector::Zero(2);
  b.logvar = Vector::Zero(2);
  a.mu = Vector::Zero(2);
  b.mu = Vector::Ones(2);
  CHECK(std::abs(gaussian_kl(a, b) - 1.0) < 1e-15);

  for (int trial = 0; trial < 25; ++trial) {
    const Index nz = 1 + static_cast<Index>(rng.below(5));
    LatentPosterior p, q;
    p.mu = rng.gaussian(nz, 1, 1.5).col(0);
    q.mu = rng.gaussian(nz, 1, 1.5).col(0);
    p.logvar = Vector::Zero(nz);
    q.logvar = Vector::Zero(nz);
    const double kl = gaussian_kl(p, q);
    const double reduced = 0.5 * (p.mu - q.mu).squaredNorm();
    CHECK(std::abs(kl - reduced) <= 1e-12 * std::max(1.0, reduced));
    CHECK(kl >= 0.0);
  }

  LatentPosterior p, q;
  p.mu = Vector::NullaryExpr(3, [&](Index) { return -1.0 + 2.0 * rng.uniform(); });
  p.logvar = Vector::NullaryExpr(3, [&](Index) { return -0.8 + 1.4 * rng.uniform(); });
  q.mu = Vector::NullaryExpr(3, [&](Index) { return -1.0 + 2.0 * rng.uniform(); });
  q.logvar = Vector::NullaryExpr(3, [&](Index) { return -0.8 + 1.4 * rng.uniform(); });
  q.mu(0) += 1.5;
  const double closed = gaussian_kl(p, q);
  const double mc = oracle::mc_kl(p, q, /*to_prior=*/false, 1000000, 777);
  CHECK(std::abs(closed - mc) / closed < 0.01);
}

TEST_CASE("gaussian_kl rejects dimension mismatches") {
  LatentPosterior a, b;
  a.mu = Vector::Zero(2);
  a.logvar = Vector::Zero(2);
  b.mu = Vector::Zero(3);
  b.logvar = Vector::Zero(3);
  CHECK_THROWS_AS(gaussian_kl(a, b), InvalidShapeError);
}

TEST_CASE("empirical mixture identity holds on encoded data") {
  SynthConfig sc;
  sc.n_bags = 20;
  sc.instances_per_bag = 6;
  sc.feature_dim = 6;
  sc.seed = 5;
  const MILDataset ds = synth_generate(sc);
  const Normalizer norm = fit_normalizer(ds);
  const VaeParams vae = small_random_vae(26, 6, 3);

  Matrix latents(3, ds.total_instances());
  std::vector<int> from_pos;
  Index col = 0;
  for (const auto& bag : ds.bags) {
    const Matrix mu = encode_mu(vae, apply(norm, bag.instances));
    for (Index c = 0; c < mu.cols(); ++c) {
      latents.col(col++) = mu.col(c);
      from_pos.push_back(bag.label == 1 ? 1 : 0);
    }
  }
  CHECK(oracle::mixture_identity_gap(latents, from_pos) < 1e-12);
}
