/*
 * Copyright 2026 The capmatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "capmatch/error.hpp"
#include "capmatch/tensor.hpp"

// Little-endian float32 blob helpers shared by archives and checkpoints.
namespace capmatch::blob {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

inline void append_floats(std::string& out, const Tensor<float>& t) {
  for (float f : t.data()) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
    out.append(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

// Caller checks that offset + 4 * prod(shape) fits in `bytes`.
inline Tensor<float> decode_floats(const std::string& bytes, std::size_t offset,
                                   std::vector<std::size_t> shape) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + offset + i * 4, 4);
    data[i] = std::bit_cast<float>(to_little(bits));
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

}  // namespace capmatch::blob
