#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "convflip/nn.hpp"

namespace convflip {

// Versioned binary parameter container. Layout (all integers little-endian):
//   magic "CVFLCKP1" | u32 tensor count
//   per tensor: u32 name length | name | u32 rows | u32 cols | f32 row-major
//   u32 metadata length | metadata (JSON)
// Writing is deterministic: tensors serialize in registration order and the
// metadata is an ordered JSON dump.
struct Checkpoint {
  std::vector<std::pair<std::string, Eigen::MatrixXf>> tensors;
  nlohmann::ordered_json meta;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  static_assert(sizeof(v) == sizeof(f));
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

inline float get_f32(std::istream& in) {
  const std::uint32_t v = get_u32(in);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

inline constexpr char kMagic[8] = {'C', 'V', 'F', 'L', 'C', 'K', 'P', '1'};

}  // namespace detail

template <typename Sc>
Checkpoint make_checkpoint(const ParamStore<Sc>& params, nlohmann::ordered_json meta) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (const auto& e : params.entries())
    ck.tensors.emplace_back(e.name, e.value.template cast<float>());
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kMagic, 8);
  detail::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, m] : ck.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put_f32(out, m(r, c));
  }
  const std::string meta = ck.meta.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!out) throw std::runtime_error("write failure on " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  Checkpoint ck;
  const std::uint32_t count = detail::get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = detail::get_u32(in), cols = detail::get_u32(in);
    Eigen::MatrixXf m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = detail::get_f32(in);
    if (!in) throw std::runtime_error("truncated checkpoint " + path);
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  const std::uint32_t meta_len = detail::get_u32(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), meta_len);
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  ck.meta = nlohmann::ordered_json::parse(meta);
  return ck;
}

// Copy tensor values into an already-declared store; every tensor must match
// an existing parameter in name and shape, and every parameter must be
// covered.
template <typename Sc>
void apply_checkpoint(const Checkpoint& ck, ParamStore<Sc>& params) {
  if (ck.tensors.size() != params.count())
    throw std::runtime_error("checkpoint has " + std::to_string(ck.tensors.size()) +
                             " tensors, model expects " + std::to_string(params.count()));
  for (const auto& [name, m] : ck.tensors) {
    if (!params.has(name)) throw std::runtime_error("checkpoint tensor '" + name + "' not in model");
    auto& v = params.value(name);
    if (v.rows() != m.rows() || v.cols() != m.cols())
      throw std::runtime_error("checkpoint tensor '" + name + "' shape mismatch");
    v = m.template cast<Sc>();
  }
}

}  // namespace convflip
