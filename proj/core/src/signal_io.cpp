// SPDX-License-Identifier: Apache-2.0
#include "singlem/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "singlem/error.hpp"
#include "singlem/kv_file.hpp"
#include "singlem/rng.hpp"

namespace singlem {

namespace fs = std::filesystem;

void Recording::validate() const {
  if (!(sampling_rate_hz > 0.0) || !std::isfinite(sampling_rate_hz)) {
    throw Error(ErrorCode::InvalidSpec, "sampling rate must be positive");
  }
  std::set<std::string> names;
  for (const auto& ch : channels) {
    if (ch.name.empty() || ch.name.find_first_of(",\n=") != std::string::npos) {
      throw Error(ErrorCode::InvalidSpec, "bad channel name '" + ch.name + "'");
    }
    if (!names.insert(ch.name).second) {
      throw Error(ErrorCode::InvalidSpec, "duplicate channel name '" + ch.name + "'");
    }
    if (ch.samples.size() != num_samples()) {
      throw Error(ErrorCode::InvalidSpec, "channel '" + ch.name + "' length differs");
    }
    for (double v : ch.samples) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteSample, "channel '" + ch.name + "'");
      if (ch.scaled && std::abs(v) >= 1.0) {
        throw Error(ErrorCode::AmplitudeOutOfRange, "scaled channel '" + ch.name + "' has |v| >= 1");
      }
    }
  }
}

fs::path header_path(const fs::path& stem) {
  auto p = stem;
  p += ".sgh";
  return p;
}

fs::path payload_path(const fs::path& stem) {
  auto p = stem;
  p += ".sgb";
  return p;
}

namespace {

fs::path strip_ext(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".sgh" || ext == ".sgb") {
    auto p = path;
    p.replace_extension();
    return p;
  }
  return path;
}

void put_f32_le(char* dst, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  std::memcpy(dst, &bits, 4);
}

float get_f32_le(const char* src) {
  std::uint32_t bits;
  std::memcpy(&bits, src, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

}  // namespace

Recording read_container(const fs::path& path) {
  const fs::path stem = strip_ext(path);
  const KeyValueFile header = [&] {
    try {
      return KeyValueFile::load(header_path(stem));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IoFailure) throw;
      throw Error(ErrorCode::MalformedHeader, header_path(stem).string() + ": " + e.what());
    }
  }();

  auto need = [&](const char* key) -> const std::string& {
    if (!header.contains(key)) {
      throw Error(ErrorCode::MalformedHeader, header_path(stem).string() + ": missing '" + key + "'");
    }
    return header.require(key);
  };
  auto number = [&](const char* key) {
    const std::string& v = need(key);
    try {
      std::size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedHeader, std::string("key '") + key + "' is not numeric");
    }
  };

  if (need("version") != "1") throw Error(ErrorCode::MalformedHeader, "unsupported version " + need("version"));
  if (header.get_string("dtype", "f32") != "f32") throw Error(ErrorCode::MalformedHeader, "unsupported dtype");

  Recording rec;
  rec.sampling_rate_hz = number("rate");
  if (!(rec.sampling_rate_hz > 0.0)) throw Error(ErrorCode::MalformedHeader, "rate must be positive");
  const double samples_d = number("samples");
  if (samples_d < 0 || samples_d != std::floor(samples_d)) {
    throw Error(ErrorCode::MalformedHeader, "samples must be a non-negative integer");
  }
  const auto n_samples = static_cast<std::size_t>(samples_d);
  const auto names = split(need("channels"), ',');
  rec.subject_id = header.get_string("subject", stem.filename().string());
  if (auto label = header.get("label")) {
    try {
      rec.label = std::stoi(*label);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedHeader, "label is not an integer");
    }
  }
  const bool scaled = header.get_string("scaled", "0") == "1";

  std::ifstream in(payload_path(stem), std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + payload_path(stem).string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::size_t expected = names.size() * n_samples * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::PayloadSizeMismatch, payload_path(stem).string() + ": expected " +
                                                    std::to_string(expected) + " bytes, found " +
                                                    std::to_string(bytes.size()));
  }

  rec.channels.reserve(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    ChannelSignal ch{names[c], std::vector<double>(n_samples), scaled};
    const char* base = bytes.data() + c * n_samples * 4;
    for (std::size_t i = 0; i < n_samples; ++i) {
      const float v = get_f32_le(base + 4 * i);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteSample,
                    "channel '" + names[c] + "' sample " + std::to_string(i));
      }
      ch.samples[i] = v;
    }
    rec.channels.push_back(std::move(ch));
  }
  return rec;
}

void write_container(const Recording& rec, const fs::path& path) {
  rec.validate();
  for (const auto& ch : rec.channels) {
    for (double v : ch.samples) {
      if (!std::isfinite(static_cast<float>(v))) {
        throw Error(ErrorCode::NonFiniteSample, "channel '" + ch.name + "' overflows f32");
      }
    }
  }
  const fs::path stem = strip_ext(path);

  KeyValueFile header;
  header.set("version", "1");
  header.set("rate", format_double(rec.sampling_rate_hz));
  std::string names;
  for (const auto& ch : rec.channels) {
    if (!names.empty()) names += ',';
    names += ch.name;
  }
  header.set("channels", names);
  header.set("samples", std::to_string(rec.num_samples()));
  header.set("dtype", "f32");
  header.set("subject", rec.subject_id);
  if (rec.label) header.set("label", std::to_string(*rec.label));
  const bool scaled = !rec.channels.empty() && rec.channels.front().scaled;
  header.set("scaled", scaled ? "1" : "0");

  std::string payload(rec.channels.size() * rec.num_samples() * 4, '\0');
  char* dst = payload.data();
  for (const auto& ch : rec.channels) {
    for (double v : ch.samples) {
      put_f32_le(dst, static_cast<float>(v));
      dst += 4;
    }
  }

  if (stem.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(stem.parent_path(), ec);
  }
  write_file_atomic(payload_path(stem), payload);
  write_file_atomic(header_path(stem), header.serialize());
}

std::vector<fs::path> list_containers(const fs::path& dir) {
  std::vector<fs::path> stems;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::IoFailure, dir.string() + " is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".sgh") {
      auto stem = entry.path();
      stem.replace_extension();
      stems.push_back(stem);
    }
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

void SyntheticSpec::validate() const {
  if (n_subjects < 1 || n_channels < 0) throw Error(ErrorCode::InvalidSpec, "subject/channel counts");
  if (!(duration_s >= 0.0) || !(sampling_rate_hz > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "duration and rate must be positive");
  }
  if (!(noise_std_uv >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise std must be non-negative");
  for (const auto& b : band_components) {
    if (!(b.center_hz > 0.0) || !(b.center_hz < sampling_rate_hz / 2.0)) {
      throw Error(ErrorCode::InvalidSpec, "component frequency " + format_double(b.center_hz) +
                                              " Hz outside (0, rate/2)");
    }
  }
  if (!channel_names.empty() && channel_names.size() != static_cast<std::size_t>(n_channels)) {
    throw Error(ErrorCode::InvalidSpec, "channel_names size differs from n_channels");
  }
}

Recording generate_synthetic(const SyntheticSpec& spec, int class_label, int subject_index) {
  spec.validate();
  if (class_label < 0) throw Error(ErrorCode::InvalidSpec, "negative class label");
  if (subject_index < 0) throw Error(ErrorCode::InvalidSpec, "negative subject index");

  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sampling_rate_hz));
  Recording rec;
  rec.subject_id = "S" + std::to_string(subject_index + 1);
  rec.sampling_rate_hz = spec.sampling_rate_hz;
  rec.label = class_label;

  Rng rng(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(subject_index)),
                   static_cast<std::uint64_t>(class_label)));
  for (int c = 0; c < spec.n_channels; ++c) {
    ChannelSignal ch;
    ch.name = spec.channel_names.empty() ? "Ch" + std::to_string(c + 1) : spec.channel_names[c];
    ch.samples.assign(n, 0.0);
    for (const auto& comp : spec.band_components) {
      const double gain = static_cast<std::size_t>(class_label) < comp.class_gain.size()
                              ? comp.class_gain[class_label]
                              : 1.0;
      const double amp = comp.amplitude_uv * gain;
      const double phase = spec.random_phase ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
      const double omega = 2.0 * std::numbers::pi * comp.center_hz / spec.sampling_rate_hz;
      for (std::size_t i = 0; i < n; ++i) {
        ch.samples[i] += amp * std::cos(omega * static_cast<double>(i) + phase);
      }
    }
    if (spec.noise_std_uv > 0.0) {
      for (auto& v : ch.samples) v += rng.normal(0.0, spec.noise_std_uv);
    }
    rec.channels.push_back(std::move(ch));
  }
  return rec;
}

}  // namespace singlem
