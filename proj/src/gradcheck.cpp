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

#include "milvae/gradcheck.hpp"

#include <cmath>

#include "milvae/errors.hpp"

namespace milvae {

namespace {

void check_entry(double analytic, double fd, const std::string& name, double rel_floor,
                 GradCheckReport& report) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), rel_floor});
  const double rel = std::abs(analytic - fd) / denom;
  ++report.entries_checked;
  if (rel > report.max_rel_err) {
    report.max_rel_err = rel;
    report.worst_analytic = analytic;
    report.worst_numeric = fd;
    report.worst_param = name;
  }
}

}  // namespace

GradCheckReport finite_difference_check(const std::vector<DenseLayer*>& layers,
                                        const std::vector<const LayerGrad*>& analytic,
                                        const std::function<double()>& loss, double h,
                                        double rel_floor) {
  if (layers.size() != analytic.size()) {
    throw InvalidShapeError("finite_difference_check: layer/grad count mismatch");
  }
  GradCheckReport report;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    DenseLayer& layer = *layers[li];
    const LayerGrad& grad = *analytic[li];
    for (Index c = 0; c < layer.weights.cols(); ++c) {
      for (Index r = 0; r < layer.weights.rows(); ++r) {
        const double saved = layer.weights(r, c);
        layer.weights(r, c) = saved + h;
        const double up = loss();
        layer.weights(r, c) = saved - h;
        const double down = loss();
        layer.weights(r, c) = saved;
        check_entry(grad.weights(r, c), (up - down) / (2.0 * h),
                    "layer " + std::to_string(li) + " w(" + std::to_string(r) + "," +
                        std::to_string(c) + ")",
                    rel_floor, report);
      }
    }
    for (Index r = 0; r < layer.bias.size(); ++r) {
      const double saved = layer.bias(r);
      layer.bias(r) = saved + h;
      const double up = loss();
      layer.bias(r) = saved - h;
      const double down = loss();
      layer.bias(r) = saved;
      check_entry(grad.bias(r), (up - down) / (2.0 * h),
                  "layer " + std::to_string(li) + " b(" + std::to_string(r) + ")", rel_floor,
                  report);
    }
  }
  return report;
}

}  // namespace milvae
