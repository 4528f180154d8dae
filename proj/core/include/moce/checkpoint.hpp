// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "moce/tensor.hpp"

namespace moce::io {

class CrcMismatchError : public Error {
 public:
  using Error::Error;
};
class TruncatedFileError : public Error {
 public:
  using Error::Error;
};
class VersionSkewError : public Error {
 public:
  using Error::Error;
};

// Versioned named-tensor container. Layout, all integers little-endian:
//   "MOCE" | u16 version | u32 config length | UTF-8 JSON config
//   repeated { u16 name length | name | u8 rank | u32 extents... | f32 payload }
//   u32 CRC-32 of all preceding bytes
//
// Payloads are 32-bit floats; set() rounds incoming values to that precision
// so save/load round trips are bit-exact on whatever the container holds.
class Checkpoint {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  std::string config_json = "{}";

  void set(const std::string& name, const Tensor& t);
  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

 private:
  std::map<std::string, Tensor> tensors_;
};

// Rounds every value to the nearest 32-bit float (the container precision).
Tensor quantize_f32(const Tensor& t);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Write-temp-then-rename; partial files never appear under the final name.
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace moce::io
