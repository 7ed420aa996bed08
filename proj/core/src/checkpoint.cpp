// SPDX-License-Identifier: Apache-2.0
#include "singlem/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "singlem/error.hpp"

namespace singlem {

namespace fs = std::filesystem;

namespace {

constexpr const char* kHashKey = "sha256";

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

Shape parse_shape(const std::string& text) {
  if (text == "scalar") return {};
  Shape s;
  for (const auto& part : split(text, 'x')) s.push_back(std::stoull(part));
  return s;
}

void put_f64_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

double get_f64_le(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoFailure, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const NamedArray& Checkpoint::require(const std::string& name) const {
  if (const auto* a = find(name)) return *a;
  throw Error(ErrorCode::ConfigMismatch, "checkpoint has no array '" + name + "'");
}

fs::path checkpoint_payload_path(const fs::path& path) {
  auto p = path;
  p += ".bin";
  return p;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  std::string payload;
  KeyValueFile manifest;
  manifest.set("format", "singlem-checkpoint");
  manifest.set("version", "1");
  for (const auto& [k, v] : ckpt.meta.entries()) manifest.set("meta." + k, v);
  std::size_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    if (numel(a.shape) != a.values.size()) throw Error(ErrorCode::ShapeMismatch, "array '" + a.name + "' size");
    manifest.set("tensor." + a.name,
                 "f64;" + shape_text(a.shape) + ";" + std::to_string(offset) + ";" + std::to_string(a.values.size()));
    for (double v : a.values) put_f64_le(payload, v);
    offset += a.values.size() * 8;
  }
  manifest.set("payload_bytes", std::to_string(payload.size()));
  const std::string body = manifest.serialize();
  const std::string text = body + kHashKey + "=" + sha256_hex(body + payload) + "\n";

  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  write_file_atomic(checkpoint_payload_path(path), payload);
  write_file_atomic(path, text);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string text = read_all(path);
  const std::string payload = read_all(checkpoint_payload_path(path));

  const std::string marker = std::string("\n") + kHashKey + "=";
  const auto pos = text.rfind(marker);
  if (pos == std::string::npos) throw Error(ErrorCode::IntegrityError, path.string() + " has no hash line");
  const std::string body = text.substr(0, pos + 1);
  std::string stored = text.substr(pos + marker.size());
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  if (sha256_hex(body + payload) != stored) {
    throw Error(ErrorCode::IntegrityError, path.string() + ": hash mismatch");
  }

  const KeyValueFile manifest = KeyValueFile::parse(body);
  if (manifest.get_string("format", "") != "singlem-checkpoint" || manifest.get_string("version", "") != "1") {
    throw Error(ErrorCode::MalformedHeader, path.string() + " is not a version-1 checkpoint");
  }
  Checkpoint ckpt;
  for (const auto& [key, value] : manifest.entries()) {
    if (key.rfind("meta.", 0) == 0) {
      ckpt.meta.set(key.substr(5), value);
    } else if (key.rfind("tensor.", 0) == 0) {
      const auto fields = split(value, ';');
      if (fields.size() != 4 || fields[0] != "f64") {
        throw Error(ErrorCode::MalformedHeader, "bad tensor entry '" + key + "'");
      }
      NamedArray a;
      a.name = key.substr(7);
      try {
        a.shape = parse_shape(fields[1]);
        const std::size_t offset = std::stoull(fields[2]);
        const std::size_t count = std::stoull(fields[3]);
        if (count != numel(a.shape) || offset + count * 8 > payload.size()) throw std::out_of_range(a.name);
        a.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) a.values[i] = get_f64_le(payload.data() + offset + 8 * i);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::MalformedHeader, "bad tensor entry '" + key + "'");
      }
      ckpt.arrays.push_back(std::move(a));
    }
  }
  return ckpt;
}

void export_parameters(const ParameterSet& params, Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& p : params.items()) {
    ckpt.arrays.push_back({prefix + p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
  }
}

void import_parameters(ParameterSet& params, const Checkpoint& ckpt, const std::string& prefix) {
  for (auto& p : params.items()) {
    const NamedArray& a = ckpt.require(prefix + p.name);
    if (a.shape != p.tensor.shape()) {
      throw Error(ErrorCode::ConfigMismatch, "parameter '" + p.name + "' has shape " + to_string(p.tensor.shape()) +
                                                 " but checkpoint stores " + to_string(a.shape));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(a.values.begin(), a.values.end(), dst.begin());
  }
}

}  // namespace singlem
