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
#include <string>
#include <vector>

#include "milvae/gradcheck.hpp"
#include "milvae/vae.hpp"

namespace milvae {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // observed vs expected on failure
};

// Finite-difference suites over seeded random small networks. Every config is
// checked entry-by-entry; the returned report carries the worst entry across
// all configs.
GradCheckReport gradcheck_layer_suite(Activation activation, int configs, std::uint64_t seed);
GradCheckReport gradcheck_vae_suite(int configs, std::uint64_t seed);
GradCheckReport gradcheck_joint_suite(int configs, std::uint64_t seed);

// Monte-Carlo KL estimates (sampling from the first argument's distribution).
double mc_kl_to_prior(const LatentPosterior& post, int samples, std::uint64_t seed);
double mc_gaussian_kl(const LatentPosterior& from, const LatentPosterior& to, int samples,
                      std::uint64_t seed);

// The numeric self-check battery behind `milvae selfcheck`: the three
// gradient suites, closed-form KL vs Monte Carlo, the Eq-style unit-variance
// KL reduction, pooling vs a scalar-loop oracle, activation invariants and a
// hand-computed RMSprop step. inject_fault adds a deliberately perturbed
// gradient comparison that must fail (negative control for the harness).
std::vector<CheckResult> run_selfcheck(bool inject_fault = false);

}  // namespace milvae
