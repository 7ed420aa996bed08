// SPDX-License-Identifier: Apache-2.0
#include "singlem/kv_file.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "singlem/error.hpp"

namespace singlem {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::MalformedHeader,
                  "line " + std::to_string(line_no) + " is not key=value: '" + t + "'");
    }
    kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  if (auto it = index_.find(key); it != index_.end()) {
    entries_[it->second].second = value;
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.emplace_back(key, value);
}

bool KeyValueFile::contains(const std::string& key) const { return index_.count(key) != 0; }

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return entries_[it->second].second;
}

const std::string& KeyValueFile::require(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw Error(ErrorCode::UsageError, "missing required key '" + key + "'");
  return entries_[it->second].second;
}

double KeyValueFile::require_double(const std::string& key) const {
  const std::string& v = require(key);
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, "key '" + key + "' is not a number: '" + v + "'");
  }
}

long long KeyValueFile::require_int(const std::string& key) const {
  const std::string& v = require(key);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorCode::UsageError, "key '" + key + "' is not an integer: '" + v + "'");
  }
  return out;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  return contains(key) ? require_double(key) : fallback;
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
  return contains(key) ? require_int(key) : fallback;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  auto v = get(key);
  return v ? *v : fallback;
}

std::string KeyValueFile::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char delim) {
  std::vector<std::string> parts;
  if (text.empty()) return parts;
  std::string cur;
  for (char c : text) {
    if (c == delim) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, ptr);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace singlem
