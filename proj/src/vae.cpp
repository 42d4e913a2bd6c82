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

#include "milvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "milvae/errors.hpp"

namespace milvae {

namespace {
constexpr double kClip = 1e-7;
}

std::vector<DenseLayer*> VaeParams::layers() {
  std::vector<DenseLayer*> out;
  out.reserve(encoder.size() + 2 + decoder.size());
  for (auto& l : encoder) out.push_back(&l);
  out.push_back(&mu_head);
  out.push_back(&logvar_head);
  for (auto& l : decoder) out.push_back(&l);
  return out;
}

std::vector<const DenseLayer*> VaeParams::layers() const {
  std::vector<const DenseLayer*> out;
  out.reserve(encoder.size() + 2 + decoder.size());
  for (const auto& l : encoder) out.push_back(&l);
  out.push_back(&mu_head);
  out.push_back(&logvar_head);
  for (const auto& l : decoder) out.push_back(&l);
  return out;
}

VaeParams make_vae(int input_dim, int latent_dim, Rng& rng, LatentHead head,
                   const std::vector<int>& encoder_hidden,
                   const std::vector<int>& decoder_hidden) {
  if (input_dim < 1 || latent_dim < 1) {
    throw InvalidShapeError("make_vae: input_dim and latent_dim must be >= 1");
  }
  VaeParams p;
  p.input_dim = input_dim;
  p.latent_dim = latent_dim;
  p.latent_head = head;
  int in = input_dim;
  for (int h : encoder_hidden) {
    p.encoder.push_back(make_layer(h, in, Activation::kRelu, rng));
    in = h;
  }
  p.mu_head = make_layer(latent_dim, in, head == LatentHead::kReluMu ? Activation::kRelu
                                                                     : Activation::kLinear,
                         rng);
  p.logvar_head = make_layer(latent_dim, in, Activation::kLinear, rng);
  in = latent_dim;
  for (int h : decoder_hidden) {
    p.decoder.push_back(make_layer(h, in, Activation::kRelu, rng));
    in = h;
  }
  p.decoder.push_back(make_layer(input_dim, in, Activation::kSigmoid, rng));
  return p;
}

VaeGrads zero_grads_like(const VaeParams& params) {
  VaeGrads g;
  for (const DenseLayer* l : params.layers()) g.layers.push_back(zero_grad_like(*l));
  return g;
}

void set_zero(VaeGrads& grads) {
  for (auto& g : grads.layers) set_zero(g);
}

void encode_batch(const VaeParams& params, const Matrix& x, Matrix& mu, Matrix& logvar) {
  if (x.rows() != params.input_dim) {
    throw InvalidShapeError("encode: input dim " + std::to_string(x.rows()) +
                            " != VAE input dim " + std::to_string(params.input_dim));
  }
  Matrix h = x;
  for (const auto& layer : params.encoder) h = forward(layer, h);
  mu = forward(params.mu_head, h);
  logvar = forward(params.logvar_head, h);
}

LatentPosterior encode(const VaeParams& params, const Vector& x) {
  Matrix mu, logvar;
  encode_batch(params, Matrix(x), mu, logvar);
  return LatentPosterior{mu.col(0), logvar.col(0)};
}

Matrix encode_mu(const VaeParams& params, const Matrix& x) {
  Matrix mu, logvar;
  encode_batch(params, x, mu, logvar);
  return mu;
}

Vector reparameterize(const LatentPosterior& post, Rng& rng) {
  if (post.mu.size() != post.logvar.size()) {
    throw InvalidShapeError("reparameterize: mu/logvar lengths disagree");
  }
  const Vector eps = rng.gaussian(post.mu.size(), 1, 1.0).col(0);
  return post.mu.array() + (0.5 * post.logvar.array()).exp() * eps.array();
}

Matrix decode(const VaeParams& params, const Matrix& z) {
  if (z.rows() != params.latent_dim) {
    throw InvalidShapeError("decode: latent dim " + std::to_string(z.rows()) +
                            " != VAE latent dim " + std::to_string(params.latent_dim));
  }
  Matrix h = z;
  for (const auto& layer : params.decoder) h = forward(layer, h);
  return h;
}

Vector decode(const VaeParams& params, const Vector& z) {
  return decode(params, Matrix(z)).col(0);
}

double kl_to_prior(const LatentPosterior& post) {
  const double kl =
      0.5 *
      (post.mu.array().square() + post.logvar.array().exp() - post.logvar.array() - 1.0).sum();
  // The closed form can round a hair below zero near the prior; the
  // divergence itself cannot.
  return std::max(kl, 0.0);
}

double recon_loss(const Vector& x, const Vector& xhat) {
  if (x.size() != xhat.size()) {
    throw InvalidShapeError("recon_loss: x/xhat lengths disagree");
  }
  if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) {
    throw InvalidInputError("recon_loss: x entries must lie in [0,1]");
  }
  const auto c = xhat.array().max(kClip).min(1.0 - kClip);
  return -(x.array() * c.log() + (1.0 - x.array()) * (1.0 - c).log()).sum();
}

double gaussian_kl(const LatentPosterior& from, const LatentPosterior& to) {
  if (from.mu.size() != to.mu.size() || from.logvar.size() != to.logvar.size() ||
      from.mu.size() != from.logvar.size()) {
    throw InvalidShapeError("gaussian_kl: posterior dimensions disagree");
  }
  const auto lv1 = from.logvar.array();
  const auto lv2 = to.logvar.array();
  const auto dmu = (from.mu - to.mu).array();
  const double kl = 0.5 * (lv2 - lv1 + (lv1.exp() + dmu.square()) * (-lv2).exp() - 1.0).sum();
  return std::max(kl, 0.0);
}

VaeLossBreakdown vae_loss(const VaeParams& params, const Vector& x, Mode mode,
                          double dropout_rate, Rng& rng) {
  Tape tape;
  const VaeGraph g = record_vae(tape, params, nullptr, Matrix(x), mode, dropout_rate, rng);
  VaeLossBreakdown b;
  b.kl = tape.value(g.kl_row)(0, 0);
  b.recon = tape.value(g.recon_row)(0, 0);
  b.total = b.kl + b.recon;
  return b;
}

VaeGraph record_vae(Tape& tape, const VaeParams& params, VaeGrads* grads, const Matrix& x,
                    Mode mode, double dropout_rate, Rng& rng) {
  if (x.rows() != params.input_dim) {
    throw InvalidShapeError("record_vae: input dim " + std::to_string(x.rows()) +
                            " != VAE input dim " + std::to_string(params.input_dim));
  }
  if (grads != nullptr && grads->layers.size() != params.encoder.size() + 2 + params.decoder.size()) {
    throw InvalidShapeError("record_vae: gradient buffer count does not match VAE layers");
  }
  std::size_t li = 0;
  auto grad_at = [&](std::size_t i) -> LayerGrad* {
    return grads == nullptr ? nullptr : &grads->layers[i];
  };

  VaeGraph g;
  Tape::ValueId h = tape.constant(x);
  for (const auto& layer : params.encoder) {
    h = tape.dense(layer, grad_at(li++), h);
    h = tape.dropout(h, dropout_rate, mode, rng);
  }
  g.mu = tape.dense(params.mu_head, grad_at(li++), h);
  g.logvar = tape.dense(params.logvar_head, grad_at(li++), h);

  const Matrix noise = rng.gaussian(params.latent_dim, x.cols(), 1.0);
  g.z = tape.reparameterize(g.mu, g.logvar, noise);

  Tape::ValueId d = g.z;
  for (std::size_t i = 0; i + 1 < params.decoder.size(); ++i) {
    d = tape.dense(params.decoder[i], grad_at(li++), d);
    d = tape.dropout(d, dropout_rate, mode, rng);
  }
  g.xhat = tape.dense(params.decoder.back(), grad_at(li++), d);

  g.kl_row = tape.kl_to_prior_rows(g.mu, g.logvar);
  g.recon_row = tape.bernoulli_ce_rows(x, g.xhat);
  g.loss_row = tape.add(g.kl_row, g.recon_row);
  return g;
}

}  // namespace milvae
