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

#include "milvae/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "milvae/errors.hpp"

namespace milvae {

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'I', 'L', 'V', 'A', 'E', '0', '1'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;

  explicit Writer(const std::filesystem::path& path)
      : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw IoError("cannot write model file: " + path.string());
  }
  void bytes(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u8(std::uint8_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void pad3() {
    const std::uint8_t zero[3] = {0, 0, 0};
    bytes(zero, 3);
  }
  void vec(const Vector& v) { bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size())); }
  void mat(const Matrix& m) { bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  void layer(const DenseLayer& l) {
    u32(static_cast<std::uint32_t>(l.out_dim()));
    u32(static_cast<std::uint32_t>(l.in_dim()));
    u8(static_cast<std::uint8_t>(l.activation));
    pad3();
    mat(l.weights);
    vec(l.bias);
  }
};

struct Reader {
  std::ifstream in;
  std::filesystem::path path;

  explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError("cannot open model file: " + p.string());
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("model file truncated: " + path.string());
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  void pad3() {
    std::uint8_t skip[3];
    bytes(skip, 3);
  }
  Vector vec(Index n) {
    Vector v(n);
    bytes(v.data(), sizeof(double) * static_cast<std::size_t>(n));
    return v;
  }
  DenseLayer layer() {
    DenseLayer l;
    const std::uint32_t out = u32();
    const std::uint32_t in_dim = u32();
    const std::uint8_t act = u8();
    pad3();
    if (out == 0 || in_dim == 0 || out > (1u << 24) || in_dim > (1u << 24)) {
      throw ParseError("model file has implausible layer dims: " + path.string());
    }
    if (act > 3) throw ParseError("model file has unknown activation: " + path.string());
    l.activation = static_cast<Activation>(act);
    l.weights.resize(out, in_dim);
    bytes(l.weights.data(), sizeof(double) * static_cast<std::size_t>(l.weights.size()));
    l.bias = vec(static_cast<Index>(out));
    return l;
  }
};

void write_vae(Writer& w, const VaeParams& p) {
  w.u32(static_cast<std::uint32_t>(p.encoder.size()));
  for (const auto& l : p.encoder) w.layer(l);
  w.layer(p.mu_head);
  w.layer(p.logvar_head);
  w.u32(static_cast<std::uint32_t>(p.decoder.size()));
  for (const auto& l : p.decoder) w.layer(l);
}

VaeParams read_vae(Reader& r, int input_dim, int latent_dim, LatentHead head) {
  VaeParams p;
  p.input_dim = input_dim;
  p.latent_dim = latent_dim;
  p.latent_head = head;
  const std::uint32_t n_enc = r.u32();
  for (std::uint32_t i = 0; i < n_enc; ++i) p.encoder.push_back(r.layer());
  p.mu_head = r.layer();
  p.logvar_head = r.layer();
  const std::uint32_t n_dec = r.u32();
  for (std::uint32_t i = 0; i < n_dec; ++i) p.decoder.push_back(r.layer());
  if (p.mu_head.out_dim() != latent_dim || p.logvar_head.out_dim() != latent_dim) {
    throw ParseError("model file: head dims disagree with declared n_z");
  }
  if (p.decoder.empty() || p.decoder.back().out_dim() != input_dim) {
    throw ParseError("model file: decoder output dim disagrees with declared d");
  }
  return p;
}

}  // namespace

void save_model(const MilModel& model, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(model.input_dim()));
  w.u32(static_cast<std::uint32_t>(model.latent_dim()));
  w.u8(static_cast<std::uint8_t>(model.vae_pm.latent_head));
  w.pad3();
  w.f64(model.weight_calib_m);
  w.u32(static_cast<std::uint32_t>(model.normalizer.min.size()));
  w.vec(model.normalizer.min);
  w.vec(model.normalizer.max);
  write_vae(w, model.vae_pm);
  write_vae(w, model.vae_neg);
  w.u32(static_cast<std::uint32_t>(model.clf.size()));
  for (const auto& l : model.clf) w.layer(l);
  if (!w.out) throw IoError("failed while writing model file: " + path.string());
}

MilModel load_model(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a milvae model file: " + path.string());
  }
  if (r.u32() != kVersion) {
    throw ParseError("unsupported model file version: " + path.string());
  }
  const int d = static_cast<int>(r.u32());
  const int nz = static_cast<int>(r.u32());
  const std::uint8_t head_byte = r.u8();
  r.pad3();
  if (head_byte > 1) throw ParseError("model file has unknown latent head: " + path.string());
  const LatentHead head = static_cast<LatentHead>(head_byte);

  MilModel model;
  model.weight_calib_m = r.f64();
  const std::uint32_t norm_dim = r.u32();
  if (norm_dim != static_cast<std::uint32_t>(d)) {
    throw ParseError("model file: normalizer dim disagrees with d");
  }
  model.normalizer.min = r.vec(d);
  model.normalizer.max = r.vec(d);
  model.vae_pm = read_vae(r, d, nz, head);
  model.vae_neg = read_vae(r, d, nz, head);
  const std::uint32_t n_clf = r.u32();
  for (std::uint32_t i = 0; i < n_clf; ++i) model.clf.push_back(r.layer());
  if (model.clf.empty() || model.clf.front().in_dim() != 2 * nz) {
    throw ParseError("model file: classifier input dim must be 2*n_z");
  }
  return model;
}

}  // namespace milvae
