// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format, identical for both networks:
//
//   magic "LCBV" | u32 version (=1) | u8 kind (0 vae, 1 crnn)
//   config echo (kind-specific, little-endian fixed fields)
//   u64 tensor count, then per tensor in ascending name order:
//     u32 name length + UTF-8 name | u32 rank | u64 dims… | f32 payload
//   metadata: u64 epoch | f64 loss | u64 rng seed | u64 rng counter
//             | u8 has_spare | f64 spare
//   u32 CRC-32 (zlib polynomial) of every preceding byte
//
// Values are little-endian; tensor payloads are stored as f32 regardless of
// the in-memory dtype. save → load → save reproduces identical bytes.

#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "expdate/crnn.hpp"
#include "expdate/vae.hpp"

namespace expdate {

enum class CheckpointKind : std::uint8_t { vae = 0, crnn = 1 };

struct CheckpointMeta {
  std::uint64_t epoch = 0;
  double loss = 0.0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  bool rng_has_spare = false;
  double rng_spare = 0.0;
};

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'L', 'C', 'B', 'V'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n, const std::string& origin)
      : p_(p), n_(n), origin_(origin) {}

  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_++]) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t offset() const { return pos_; }
  bool exhausted() const { return pos_ == n_; }

  void need(std::size_t n) const {
    if (pos_ + n > n_)
      throw std::runtime_error(cat("checkpoint ", origin_, " truncated: needed ", n,
                                   " bytes at offset ", pos_, ", file has ", n_));
  }

 private:
  const std::uint8_t* p_;
  std::size_t pos_ = 0;
  std::size_t n_;
  std::string origin_;
};

template <class T>
void write_named_tensors(ByteWriter& w,
                         const std::vector<std::pair<std::string, const Tensor<T>*>>& named) {
  auto sorted = named;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  w.u64(sorted.size());
  for (const auto& [name, t] : sorted) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) w.u64(d);
    const T* p = t->data();
    for (std::size_t i = 0; i < t->size(); ++i) w.f32(static_cast<float>(p[i]));
  }
}

template <class T>
std::map<std::string, Tensor<T>> read_named_tensors(ByteReader& r) {
  std::map<std::string, Tensor<T>> out;
  std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.u64());
      n *= d;
    }
    std::vector<T> vals(n);
    for (std::size_t k = 0; k < n; ++k) vals[k] = static_cast<T>(r.f32());
    out.emplace(std::move(name), Tensor<T>(std::move(shape), std::move(vals)));
  }
  return out;
}

inline void write_meta(ByteWriter& w, const CheckpointMeta& m) {
  w.u64(m.epoch);
  w.f64(m.loss);
  w.u64(m.rng_seed);
  w.u64(m.rng_counter);
  w.u8(m.rng_has_spare ? 1 : 0);
  w.f64(m.rng_spare);
}

inline CheckpointMeta read_meta(ByteReader& r) {
  CheckpointMeta m;
  m.epoch = r.u64();
  m.loss = r.f64();
  m.rng_seed = r.u64();
  m.rng_counter = r.u64();
  m.rng_has_spare = r.u8() != 0;
  m.rng_spare = r.f64();
  return m;
}

inline void write_sizes(ByteWriter& w, const std::vector<std::size_t>& v) {
  w.u64(v.size());
  for (std::size_t x : v) w.u64(x);
}

inline std::vector<std::size_t> read_sizes(ByteReader& r) {
  std::vector<std::size_t> v(static_cast<std::size_t>(r.u64()));
  for (auto& x : v) x = static_cast<std::size_t>(r.u64());
  return v;
}

inline void write_config(ByteWriter& w, const VaeConfig& c) {
  w.u64(c.height);
  w.u64(c.width);
  write_sizes(w, c.encoder_filters);
  write_sizes(w, c.encoder_strides);
  write_sizes(w, c.bilstm_hidden);
  w.f64(c.dropout_rate);
  w.u64(c.latent_dim);
  w.u8(c.latent_head == LatentHead::bilstm ? 0 : 1);
  w.u64(c.dec_h);
  w.u64(c.dec_w);
  w.u64(c.dec_c);
  write_sizes(w, c.decoder_filters);
  write_sizes(w, c.decoder_strides);
}

inline VaeConfig read_vae_config(ByteReader& r) {
  VaeConfig c;
  c.height = r.u64();
  c.width = r.u64();
  c.encoder_filters = read_sizes(r);
  c.encoder_strides = read_sizes(r);
  c.bilstm_hidden = read_sizes(r);
  c.dropout_rate = r.f64();
  c.latent_dim = r.u64();
  c.latent_head = r.u8() == 0 ? LatentHead::bilstm : LatentHead::dense;
  c.dec_h = r.u64();
  c.dec_w = r.u64();
  c.dec_c = r.u64();
  c.decoder_filters = read_sizes(r);
  c.decoder_strides = read_sizes(r);
  return c;
}

inline void write_config(ByteWriter& w, const CrnnConfig& c) {
  w.u64(c.height);
  w.u64(c.width);
  w.u64(c.in_channels);
  write_sizes(w, c.conv_maps);
  w.u64(c.lstm_layers);
  w.u64(c.lstm_hidden);
  w.u64(c.classes);
}

inline CrnnConfig read_crnn_config(ByteReader& r) {
  CrnnConfig c;
  c.height = r.u64();
  c.width = r.u64();
  c.in_channels = r.u64();
  c.conv_maps = read_sizes(r);
  c.lstm_layers = r.u64();
  c.lstm_hidden = r.u64();
  c.classes = r.u64();
  return c;
}

inline void write_checkpoint_file(const std::string& path, ByteWriter& w) {
  std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, w.data().data(), static_cast<uInt>(w.data().size())));
  w.u32(crc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error(cat("cannot open checkpoint ", path, " for writing"));
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.data().size()));
  if (!out) throw std::runtime_error(cat("short write to checkpoint ", path));
}

inline std::vector<std::uint8_t> read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error(cat("cannot open checkpoint ", path));
  std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw std::runtime_error(cat("short read from checkpoint ", path));
  if (buf.size() < 13)
    throw std::runtime_error(cat("checkpoint ", path, " truncated: only ", buf.size(),
                                 " bytes"));
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(buf[buf.size() - 4 + static_cast<std::size_t>(i)])
              << (8 * i);
  std::uint32_t actual = static_cast<std::uint32_t>(
      ::crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
  if (stored != actual)
    throw std::runtime_error(cat("checkpoint ", path, " CRC mismatch: stored ", stored,
                                 ", computed ", actual));
  buf.resize(buf.size() - 4);
  return buf;
}

inline void check_header(ByteReader& r, CheckpointKind want, const std::string& path) {
  std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    throw std::runtime_error(cat("not a checkpoint file (bad magic at offset 0): ",
                                 path));
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error(cat("checkpoint ", path, " has version ", version,
                                 ", expected ", kCheckpointVersion));
  std::uint8_t kind = r.u8();
  if (kind != static_cast<std::uint8_t>(want))
    throw std::runtime_error(cat("checkpoint ", path, " holds a ",
                                 kind == 0 ? "vae" : kind == 1 ? "crnn" : "unknown",
                                 " model, expected ",
                                 want == CheckpointKind::vae ? "vae" : "crnn"));
}

/// Replaces each visited tensor with the stored one of the same name.
template <class T, class Params>
void assign_tensors(Params& params, std::map<std::string, Tensor<T>>& stored,
                    const std::string& path) {
  params.visit([&](const std::string& name, Tensor<T>& t, bool) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw std::runtime_error(cat("checkpoint ", path, " is missing tensor ", name));
    if (it->second.shape() != t.shape())
      throw std::runtime_error(cat("checkpoint ", path, " tensor ", name, " has shape ",
                                   shape_str(it->second.shape()), ", model expects ",
                                   shape_str(t.shape())));
    t = it->second;
    stored.erase(it);
  });
  if (!stored.empty())
    throw std::runtime_error(cat("checkpoint ", path, " holds unknown tensor ",
                                 stored.begin()->first));
}

template <class T, class Params>
std::vector<std::pair<std::string, const Tensor<T>*>> collect_tensors(Params& params) {
  std::vector<std::pair<std::string, const Tensor<T>*>> named;
  params.visit([&](const std::string& name, Tensor<T>& t, bool) {
    named.emplace_back(name, &t);
  });
  return named;
}

}  // namespace detail

template <class T>
void save_vae_checkpoint(const std::string& path, const VaeConfig& cfg,
                         VaeParams<T>& params, const CheckpointMeta& meta) {
  detail::ByteWriter w;
  w.bytes(detail::kCheckpointMagic, 4);
  w.u32(detail::kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(CheckpointKind::vae));
  detail::write_config(w, cfg);
  detail::write_named_tensors(w, detail::collect_tensors<T>(params));
  detail::write_meta(w, meta);
  detail::write_checkpoint_file(path, w);
}

template <class T>
std::tuple<VaeConfig, VaeParams<T>, CheckpointMeta> load_vae_checkpoint(
    const std::string& path) {
  std::vector<std::uint8_t> buf = detail::read_checkpoint_file(path);
  detail::ByteReader r(buf.data(), buf.size(), path);
  detail::check_header(r, CheckpointKind::vae, path);
  VaeConfig cfg = detail::read_vae_config(r);
  auto stored = detail::read_named_tensors<T>(r);
  CheckpointMeta meta = detail::read_meta(r);
  if (!r.exhausted())
    throw std::runtime_error(detail::cat("checkpoint ", path, " has ",
                                         buf.size() - r.offset(),
                                         " trailing bytes at offset ", r.offset()));
  Rng scratch(0);
  VaeParams<T> params = vae_init<T>(scratch, cfg);
  detail::assign_tensors(params, stored, path);
  return {cfg, std::move(params), meta};
}

template <class T>
void save_crnn_checkpoint(const std::string& path, const CrnnConfig& cfg,
                          CrnnParams<T>& params, const CheckpointMeta& meta) {
  detail::ByteWriter w;
  w.bytes(detail::kCheckpointMagic, 4);
  w.u32(detail::kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(CheckpointKind::crnn));
  detail::write_config(w, cfg);
  detail::write_named_tensors(w, detail::collect_tensors<T>(params));
  detail::write_meta(w, meta);
  detail::write_checkpoint_file(path, w);
}

template <class T>
std::tuple<CrnnConfig, CrnnParams<T>, CheckpointMeta> load_crnn_checkpoint(
    const std::string& path) {
  std::vector<std::uint8_t> buf = detail::read_checkpoint_file(path);
  detail::ByteReader r(buf.data(), buf.size(), path);
  detail::check_header(r, CheckpointKind::crnn, path);
  CrnnConfig cfg = detail::read_crnn_config(r);
  auto stored = detail::read_named_tensors<T>(r);
  CheckpointMeta meta = detail::read_meta(r);
  if (!r.exhausted())
    throw std::runtime_error(detail::cat("checkpoint ", path, " has ",
                                         buf.size() - r.offset(),
                                         " trailing bytes at offset ", r.offset()));
  Rng scratch(0);
  CrnnParams<T> params = crnn_init<T>(scratch, cfg);
  detail::assign_tensors(params, stored, path);
  return {cfg, std::move(params), meta};
}

}  // namespace expdate
