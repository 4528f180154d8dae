// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace moce::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container formats are little-endian; big-endian hosts need byte swaps");

void put_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& what) : bytes_(bytes), what_(what) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  const char* take(std::size_t n) {
    if (remaining() < n) {
      throw TruncatedFileError(what_ + ": truncated file (wanted " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos_) + ")");
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t u8() { return static_cast<std::uint8_t>(*take(1)); }
  std::uint16_t u16() {
    std::uint16_t v;
    std::memcpy(&v, take(2), 2);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len)));
}

}  // namespace

Tensor quantize_f32(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data) v = static_cast<double>(static_cast<float>(v));
  return out;
}

void Checkpoint::set(const std::string& name, const Tensor& t) {
  if (name.empty() || name.size() > 0xffff) throw Error("checkpoint: bad tensor name");
  tensors_[name] = quantize_f32(t);
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("checkpoint: no tensor named \"" + name + "\"");
  return it->second;
}

bool Checkpoint::has(const std::string& name) const { return tensors_.count(name) != 0; }

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append("MOCE", 4);
  put_u16(out, Checkpoint::kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_json.size()));
  out.append(ckpt.config_json);
  for (const auto& [name, t] : ckpt.tensors()) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t.shape.size()));
    for (int e : t.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.data) {
      float f = static_cast<float>(v);
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  put_u32(out, crc32_of(out, out.size()));
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 14) throw TruncatedFileError("checkpoint: file too short: " + path);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32_of(bytes, bytes.size() - 4) != stored_crc) {
    throw CrcMismatchError("checkpoint: CRC-32 mismatch in " + path);
  }

  Reader r(bytes, "checkpoint");
  if (std::memcmp(r.take(4), "MOCE", 4) != 0) {
    throw Error("checkpoint: bad magic in " + path + " (expected MOCE)");
  }
  std::uint16_t version = r.u16();
  if (version != Checkpoint::kFormatVersion) {
    throw VersionSkewError("checkpoint: unsupported format version " + std::to_string(version) +
                           " (supported: " + std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  Checkpoint ckpt;
  std::uint32_t cfg_len = r.u32();
  ckpt.config_json.assign(r.take(cfg_len), cfg_len);

  while (r.remaining() > 4) {
    std::uint16_t name_len = r.u16();
    std::string name(r.take(name_len), name_len);
    std::uint8_t rank = r.u8();
    std::vector<int> shape(rank);
    for (auto& e : shape) e = static_cast<int>(r.u32());
    std::size_t numel = shape_numel(shape);
    Tensor t = Tensor::zeros(shape);
    const char* payload = r.take(numel * 4);
    for (std::size_t i = 0; i < numel; ++i) {
      float f;
      std::memcpy(&f, payload + i * 4, 4);
      t.data[i] = static_cast<double>(f);
    }
    ckpt.set(name, t);
  }
  if (r.remaining() != 4) throw TruncatedFileError("checkpoint: trailing garbage in " + path);
  return ckpt;
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
  std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace moce::io
