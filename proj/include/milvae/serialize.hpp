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

#include <filesystem>

#include "milvae/mil.hpp"

namespace milvae {

// Flat binary model container, little-endian. Layout:
//   magic "MILVAE01", u32 version, u32 d, u32 n_z, u8 latent_head, pad[3],
//   f64 m, normalizer (u32 d, f64 min[d], f64 max[d]),
//   VAE+- section, VAE- section, classifier section.
// A VAE section is: u32 n_encoder, encoder layers, mu head, logvar head,
// u32 n_decoder, decoder layers. Each layer is u32 out, u32 in,
// u8 activation, pad[3], then the weight block (column-major f64) and bias.
void save_model(const MilModel& model, const std::filesystem::path& path);
MilModel load_model(const std::filesystem::path& path);

}  // namespace milvae
