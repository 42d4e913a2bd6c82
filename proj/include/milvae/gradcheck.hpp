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

#include <functional>
#include <string>
#include <vector>

#include "milvae/nn.hpp"
#include "milvae/types.hpp"

namespace milvae {

// Central finite differences against analytic gradients. The loss callback
// must re-evaluate the full forward pass deterministically (reseed any rng it
// uses); it is the independent oracle here, never touching backward().
struct GradCheckReport {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string worst_param;
  int entries_checked = 0;

  bool pass(double tol = 1e-4) const { return entries_checked > 0 && max_rel_err < tol; }
};

// rel err = |a - f| / max(|a|, |f|, rel_floor); the floor turns the
// comparison absolute for near-zero gradients, where the finite-difference
// noise floor (~1e-9) would otherwise dominate.
GradCheckReport finite_difference_check(const std::vector<DenseLayer*>& layers,
                                        const std::vector<const LayerGrad*>& analytic,
                                        const std::function<double()>& loss, double h = 1e-5,
                                        double rel_floor = 1e-3);

}  // namespace milvae
