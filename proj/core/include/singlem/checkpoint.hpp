// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "singlem/kv_file.hpp"
#include "singlem/parameters.hpp"

namespace singlem {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// A checkpoint is a text manifest at `path` plus a raw little-endian f64
/// payload at `path` + ".bin". The manifest lists every array (name, dtype,
/// shape, byte offset, count), echoes free-form metadata under `meta.`, and
/// ends with a SHA-256 over the manifest body and the payload.
struct Checkpoint {
  KeyValueFile meta;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  const NamedArray& require(const std::string& name) const;
};

std::filesystem::path checkpoint_payload_path(const std::filesystem::path& path);

/// Atomic: each file is written to a temp name and renamed.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IntegrityError on a hash mismatch, MalformedHeader on bad syntax.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter of `params` as an array named prefix + name.
void export_parameters(const ParameterSet& params, Checkpoint& ckpt, const std::string& prefix = "");

/// Copies arrays into matching parameters; throws ConfigMismatch when a name
/// is missing or a shape differs.
void import_parameters(ParameterSet& params, const Checkpoint& ckpt, const std::string& prefix = "");

/// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& bytes);

}  // namespace singlem
