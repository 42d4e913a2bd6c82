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
#include <vector>

#include "milvae/nn.hpp"
#include "milvae/rng.hpp"
#include "milvae/tape.hpp"
#include "milvae/types.hpp"

namespace milvae {

// Latent head wiring. kLinear is the standard Gaussian-head VAE; kReluMu
// additionally rectifies the mean head (the logvar head stays linear either
// way, it has to produce negative values).
enum class LatentHead : std::uint8_t { kLinear = 0, kReluMu = 1 };

// One VAE: ReLU encoder trunk, (mu, logvar) heads, ReLU decoder trunk with a
// sigmoid output layer mapping back to [0,1]^d.
struct VaeParams {
  std::vector<DenseLayer> encoder;  // hidden trunk, ReLU
  DenseLayer mu_head;
  DenseLayer logvar_head;
  std::vector<DenseLayer> decoder;  // hidden ReLU layers + sigmoid output
  int input_dim = 0;
  int latent_dim = 0;
  LatentHead latent_head = LatentHead::kLinear;

  // All trainable layers in declared (serialization) order:
  // encoder..., mu_head, logvar_head, decoder...
  std::vector<DenseLayer*> layers();
  std::vector<const DenseLayer*> layers() const;
};

// Builds the default architecture: encoder d -> 512 -> 256 -> (nz, nz) heads,
// decoder nz -> 256 -> 512 -> d sigmoid. Hidden sizes are overridable for
// small test nets.
VaeParams make_vae(int input_dim, int latent_dim, Rng& rng,
                   LatentHead head = LatentHead::kLinear,
                   const std::vector<int>& encoder_hidden = {512, 256},
                   const std::vector<int>& decoder_hidden = {256, 512});

// Gradient buffers parallel to VaeParams::layers().
struct VaeGrads {
  std::vector<LayerGrad> layers;
};
VaeGrads zero_grads_like(const VaeParams& params);
void set_zero(VaeGrads& grads);

struct LatentPosterior {
  Vector mu;
  Vector logvar;
};

struct VaeLossBreakdown {
  double kl = 0.0;
  double recon = 0.0;
  double total = 0.0;
};

// ---- Plain (inference-mode, tape-free) evaluation ----

LatentPosterior encode(const VaeParams& params, const Vector& x);

// Batch encodings (columns are instances): posterior means / logvars.
Matrix encode_mu(const VaeParams& params, const Matrix& x);
void encode_batch(const VaeParams& params, const Matrix& x, Matrix& mu, Matrix& logvar);

// z = mu + exp(logvar / 2) .* eps, eps ~ N(0, I).
Vector reparameterize(const LatentPosterior& post, Rng& rng);

Vector decode(const VaeParams& params, const Vector& z);
Matrix decode(const VaeParams& params, const Matrix& z);

// Closed-form KL(N(mu, diag(exp(logvar))) || N(0, I)).
double kl_to_prior(const LatentPosterior& post);

// Per-dimension Bernoulli cross-entropy; xhat is clipped to
// [1e-7, 1 - 1e-7] before the logs. x outside [0,1] -> InvalidInputError.
double recon_loss(const Vector& x, const Vector& xhat);

// Full diagonal-Gaussian KL(from || to). Diagnostic only; not part of any
// training loss.
double gaussian_kl(const LatentPosterior& from, const LatentPosterior& to);

// Single-sample loss estimate: KL to prior plus reconstruction
// cross-entropy of one reparameterized decode.
VaeLossBreakdown vae_loss(const VaeParams& params, const Vector& x, Mode mode,
                          double dropout_rate, Rng& rng);

// ---- Recorded (training) graph ----

// Node handles of one recorded batch pass. Rows are per-sample (1xB); the
// total is left to the caller so VAE and classifier terms can be combined.
struct VaeGraph {
  Tape::ValueId mu = -1;
  Tape::ValueId logvar = -1;
  Tape::ValueId z = -1;
  Tape::ValueId xhat = -1;
  Tape::ValueId kl_row = -1;
  Tape::ValueId recon_row = -1;
  Tape::ValueId loss_row = -1;  // kl_row + recon_row
};

// Records encoder -> reparameterize -> decoder -> losses for a batch x
// (columns are samples). grads may be nullptr to freeze the VAE. In train
// mode dropout masks and the reparameterization noise are drawn from rng in a
// fixed order, so reseeding the rng reproduces the pass exactly.
VaeGraph record_vae(Tape& tape, const VaeParams& params, VaeGrads* grads, const Matrix& x,
                    Mode mode, double dropout_rate, Rng& rng);

}  // namespace milvae
