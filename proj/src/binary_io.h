/* Copyright 2026 The MSSV Authors. All Rights Reserved.

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

// Little-endian byte packing shared by the feature dump and checkpoint codecs.

#ifndef MSSV_SRC_BINARY_IO_H_
#define MSSV_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mssv/error.h"

namespace mssv::internal {

class ByteWriter {
 public:
  void PutU8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void PutU16(uint16_t v) { PutLe(v, 2); }
  void PutU32(uint32_t v) { PutLe(v, 4); }
  void PutU64(uint64_t v) { PutLe(v, 8); }
  void PutF32(float v) { PutU32(std::bit_cast<uint32_t>(v)); }
  void PutF64(double v) { PutU64(std::bit_cast<uint64_t>(v)); }
  void PutBytes(std::string_view s) { buf_.append(s); }

  const std::string& bytes() const { return buf_; }

 private:
  void PutLe(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }

  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  uint8_t GetU8() { return static_cast<uint8_t>(GetLe(1)); }
  uint16_t GetU16() { return static_cast<uint16_t>(GetLe(2)); }
  uint32_t GetU32() { return static_cast<uint32_t>(GetLe(4)); }
  uint64_t GetU64() { return GetLe(8); }
  float GetF32() { return std::bit_cast<float>(GetU32()); }
  double GetF64() { return std::bit_cast<double>(GetU64()); }
  std::string GetString(size_t n) {
    Need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  size_t position() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(size_t n) const {
    if (n > remaining()) {
      throw Error(ErrorCode::kTruncatedFile,
                  "needed " + std::to_string(n) + " bytes at offset " +
                      std::to_string(pos_) + ", have " +
                      std::to_string(remaining()));
    }
  }
  uint64_t GetLe(int n) {
    Need(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<size_t>(n);
    return v;
  }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a half-written file.
void WriteFileAtomically(const std::filesystem::path& path,
                         std::string_view bytes);

}  // namespace mssv::internal

#endif  // MSSV_SRC_BINARY_IO_H_
