// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Binary parameter checkpoints.
 *
 * Layout: the 5-byte magic "LGCV1", then for each parameter in store order
 *   u32 LE name length, UTF-8 name, 4 x u32 LE shape (N, C, H, W),
 *   N*C*H*W float32 LE values.
 * The file ends right after the last parameter.
 */
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lgc/autodiff.hpp"
#include "lgc/error.hpp"

namespace lgc {

inline constexpr std::array<char, 5> kCheckpointMagic{'L', 'G', 'C', 'V', '1'};

namespace detail {

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t *p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const ParamStore<float> &p) {
  std::vector<std::uint8_t> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  p.for_each([&](const auto &e) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    const Shape s = e.value.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w})
      detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : e.value.vec())
      detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  return out;
}

inline ParamStore<float> decode_checkpoint(const std::vector<std::uint8_t> &b,
                                           const std::string &source = "") {
  auto fail = [&](const std::string &m) -> void {
    throw CheckpointError("checkpoint" +
                          (source.empty() ? "" : " " + source) + ": " + m);
  };
  if (b.size() < kCheckpointMagic.size() ||
      !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), b.begin()))
    fail("bad magic");
  ParamStore<float> store;
  std::size_t off = kCheckpointMagic.size();
  while (off < b.size()) {
    if (b.size() - off < 4)
      fail("truncated name length");
    const std::uint32_t len = detail::get_u32(&b[off]);
    off += 4;
    if (b.size() - off < std::size_t(len) + 16)
      fail("truncated header");
    std::string name(reinterpret_cast<const char *>(&b[off]), len);
    off += len;
    Shape s{detail::get_u32(&b[off]), detail::get_u32(&b[off + 4]),
            detail::get_u32(&b[off + 8]), detail::get_u32(&b[off + 12])};
    off += 16;
    if ((b.size() - off) / 4 < s.numel())
      fail("truncated values for '" + name + "'");
    Tensor t(s);
    for (std::size_t i = 0; i < s.numel(); ++i, off += 4)
      t[i] = std::bit_cast<float>(detail::get_u32(&b[off]));
    store.add(name, std::move(t));
  }
  return store;
}

inline void save_checkpoint(const ParamStore<float> &params,
                            const std::filesystem::path &path) {
  const auto bytes = encode_checkpoint(params);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw CheckpointError("cannot write " + tmp);
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
      throw CheckpointError("short write to " + tmp);
  }
  // Replace atomically so a crash never leaves a half-written checkpoint.
  std::filesystem::rename(tmp, path);
}

inline ParamStore<float> load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

/// Copies values from `loaded` into `dst`; names and shapes must agree.
inline void restore_parameters(ParamStore<float> &dst,
                               const ParamStore<float> &loaded) {
  if (dst.size() != loaded.size())
    throw CheckpointError("checkpoint has " + std::to_string(loaded.size()) +
                          " parameters, model has " +
                          std::to_string(dst.size()));
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto &d = dst.entry(i);
    const auto &s = loaded.entry(d.name);
    if (s.value.shape() != d.value.shape())
      throw CheckpointError("shape mismatch for '" + d.name + "': " +
                            to_string(s.value.shape()) + " vs " +
                            to_string(d.value.shape()));
    d.value = s.value;
  }
}

} // namespace lgc
