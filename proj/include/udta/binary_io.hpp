/* Copyright 2026 The UDTA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Little-endian primitives shared by the checkpoint and dataset formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "udta/errors.hpp"

namespace udta::binio {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

inline void write_f32(std::ostream& out, float f) { write_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline void write_f32s(std::ostream& out, const float* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < count; ++i) write_f32(out, data[i]);
  }
}

// Throws IoError mentioning `what` when the stream ends early.
inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated file: missing " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void read_f32s(std::istream& in, float* data, std::size_t count, const std::string& what) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto bytes = static_cast<std::streamsize>(count * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(data), bytes)) {
      throw IoError("truncated file: " + what + " holds fewer than " + std::to_string(count) + " floats");
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(read_u32(in, what));
  }
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& file) {
  char got[4] = {};
  if (!in.read(got, 4)) throw IoError(file + ": truncated before magic \"" + magic + "\"");
  if (std::memcmp(got, magic, 4) != 0) {
    throw IoError(file + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

}  // namespace udta::binio
