#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "tripletlab/embedder.hpp"
#include "tripletlab/loss.hpp"

namespace tripletlab {

// Checkpoint layout, all integers and doubles little-endian:
//
//   8 bytes   magic "TLCKPT\0\0"
//   uint32    version (= 1)
//   uint32    number of layer sizes L+1
//   int32     layer sizes, L+1 values
//   uint32    has_head (0 or 1)
//   int32     head class count C (present only when has_head = 1)
//   float64   for each layer l: weight (sizes[l] x sizes[l+1], row-major), then bias (sizes[l+1])
//   float64   head weight (d x C, row-major), then head bias (C)  (only when has_head = 1)
//
// Doubles are stored as raw IEEE-754 bits, so a save/load round trip is bit-exact.

inline constexpr std::array<char, 8> kCheckpointMagic = {'T', 'L', 'C', 'K', 'P', 'T', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  EmbedderParams embedder;
  std::optional<SoftmaxHead> head;
};

namespace detail {

template <class T>
void write_raw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <class T>
T read_raw(std::istream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) throw Error(path + ": truncated checkpoint");
  return value;
}

inline void write_block(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline void read_block(std::istream& in, Matrix& m, const std::string& path) {
  if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()))) {
    throw Error(path + ": truncated checkpoint");
  }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_raw<std::uint32_t>(out, kCheckpointVersion);
  detail::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.embedder.sizes.size()));
  for (int s : ckpt.embedder.sizes) detail::write_raw<std::int32_t>(out, s);
  detail::write_raw<std::uint32_t>(out, ckpt.head ? 1u : 0u);
  if (ckpt.head) detail::write_raw<std::int32_t>(out, ckpt.head->num_classes());
  for (const Matrix* block : ckpt.embedder.blocks()) detail::write_block(out, *block);
  if (ckpt.head) {
    for (const Matrix* block : ckpt.head->blocks()) detail::write_block(out, *block);
  }
  if (!out) throw Error("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw Error(path + ": not a checkpoint file (bad magic)");
  }
  const auto version = detail::read_raw<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw Error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = detail::read_raw<std::uint32_t>(in, path);
  if (count < 2 || count > 64) throw Error(path + ": implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) sizes.push_back(detail::read_raw<std::int32_t>(in, path));
  const auto has_head = detail::read_raw<std::uint32_t>(in, path);
  int classes = 0;
  if (has_head) classes = detail::read_raw<std::int32_t>(in, path);

  Checkpoint ckpt{EmbedderParams::zeros(sizes), std::nullopt};
  for (Matrix* block : ckpt.embedder.blocks()) detail::read_block(in, *block, path);
  if (has_head) {
    if (classes < 2) throw Error(path + ": implausible head class count");
    ckpt.head = SoftmaxHead{Matrix::Zero(sizes.back(), classes), Matrix::Zero(1, classes)};
    for (Matrix* block : ckpt.head->blocks()) detail::read_block(in, *block, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(path + ": trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace tripletlab
