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
#include <random>
#include <utility>
#include <vector>

#include "milvae/types.hpp"

namespace milvae {

// Deterministic random stream. The engine is std::mt19937_64 (fully specified
// by the standard); uniform->double and the Box-Muller normal transform are
// implemented here rather than through std::*_distribution, whose algorithms
// are implementation-defined and would break bit-reproducibility of seeded
// runs across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal draw (Box-Muller, pair cached).
  double normal();

  // Unbiased integer in [0, bound), bound >= 1.
  std::uint64_t below(std::uint64_t bound);

  // rows x cols matrix of i.i.d. N(0, stddev^2) entries, column-major fill.
  Matrix gaussian(Index rows, Index cols, double stddev);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives a child seed from a master seed and a stream index (splitmix64
// finalizer). Used to give CV folds and subordinate fits independent streams
// that do not depend on scheduling order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Fisher-Yates shuffle driven by Rng::below (std::shuffle's draw pattern is
// implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

}  // namespace milvae
