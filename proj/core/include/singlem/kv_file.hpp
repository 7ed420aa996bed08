// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace singlem {

/// Ordered `key=value` document. Used for container headers, checkpoint
/// manifests and run configs. Blank lines and lines starting with '#' are
/// ignored on parse; keys keep their insertion order on output.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  /// Throws UsageError naming the key when absent.
  const std::string& require(const std::string& key) const;
  double require_double(const std::string& key) const;
  long long require_int(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string serialize() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Splits on a delimiter; an empty input yields an empty list.
std::vector<std::string> split(const std::string& text, char delim);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Writes `bytes` to a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace singlem
