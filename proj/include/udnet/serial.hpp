#pragma once

// Little-endian binary serialization for weights files and checkpoints.
// Feature-net file: magic "UDNF", u32 version, u32 layer count, per layer
// (u32 ndims, u64 dims..., float32 data). Checkpoint: see trainer.hpp.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "udnet/network.hpp"

namespace udnet::serial {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw Error("corrupt checkpoint (bad magic/length)");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t lo = read_u32(is);
  std::uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
  std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  std::uint32_t n = read_u32(is);
  if (n > (1u << 24)) throw Error("corrupt checkpoint (bad magic/length)");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw Error("corrupt checkpoint (bad magic/length)");
  return s;
}

template <class S>
void write_f32_array(std::ostream& os, const ad::Array<S>& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) write_f32(os, static_cast<float>(a[i]));
}

template <class S>
void read_f32_array(std::istream& is, ad::Array<S>& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = static_cast<S>(read_f32(is));
}

// ---------------------------------------------------------------------------
// feature-net weights file

inline constexpr std::uint32_t kFeatureNetMagic = 0x464E4455;  // "UDNF"
inline constexpr std::uint32_t kFeatureNetVersion = 1;

template <class S>
void save_feature_net(const nn::FeatureNet<S>& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("unwritable path: " + path);
  write_u32(os, kFeatureNetMagic);
  write_u32(os, kFeatureNetVersion);
  const ad::Var<S>* layers[] = {&net.w1, &net.b1, &net.w2, &net.b2, &net.w3, &net.b3};
  write_u32(os, 6);
  for (const auto* l : layers) {
    write_u32(os, static_cast<std::uint32_t>(l->shape().size()));
    for (auto d : l->shape()) write_u64(os, static_cast<std::uint64_t>(d));
    write_f32_array(os, l->value());
  }
}

template <class S>
nn::FeatureNet<S> load_feature_net(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("missing feature weights file: " + path);
  if (read_u32(is) != kFeatureNetMagic || read_u32(is) != kFeatureNetVersion)
    throw Error("incompatible feature weights file: " + path);
  if (read_u32(is) != 6) throw Error("incompatible feature weights file: " + path);
  nn::FeatureNet<S> net = nn::FeatureNet<S>::from_seed();
  ad::Var<S>* layers[] = {&net.w1, &net.b1, &net.w2, &net.b2, &net.w3, &net.b3};
  for (auto* l : layers) {
    std::uint32_t nd = read_u32(is);
    ad::Shape shape(nd);
    for (auto& d : shape) d = static_cast<Eigen::Index>(read_u64(is));
    if (shape != l->shape()) throw Error("incompatible feature weights file: " + path);
    ad::Array<S> v(ad::shape_size(shape));
    read_f32_array(is, v);
    *l = ad::Var<S>::constant(shape, std::move(v));
  }
  return net;
}

}  // namespace udnet::serial
