// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace singlem {

struct ChannelSignal {
  std::string name;
  std::vector<double> samples;  // microvolts, or dimensionless once scaled
  bool scaled = false;
};

/// One subject/session. Channels share a length and a sampling rate.
struct Recording {
  std::string subject_id;
  std::vector<ChannelSignal> channels;
  double sampling_rate_hz = 0.0;
  /// Class index for trial containers; absent for continuous recordings.
  std::optional<int> label;

  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().samples.size(); }

  /// Throws InvalidSpec / NonFiniteSample when an invariant is broken.
  void validate() const;
};

/// Container paths: `<stem>.sgh` text header and `<stem>.sgb` payload.
std::filesystem::path header_path(const std::filesystem::path& stem);
std::filesystem::path payload_path(const std::filesystem::path& stem);

/// `path` may be the stem or either of the two files.
Recording read_container(const std::filesystem::path& path);
void write_container(const Recording& rec, const std::filesystem::path& path);

/// Every container stem found directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_containers(const std::filesystem::path& dir);

struct BandComponent {
  double center_hz = 10.0;
  double amplitude_uv = 20.0;
  /// Gain applied to the amplitude for class c; classes past the end use 1.
  std::vector<double> class_gain;
};

struct SyntheticSpec {
  int n_subjects = 1;
  int n_channels = 1;
  double duration_s = 10.0;
  double sampling_rate_hz = 128.0;
  std::vector<BandComponent> band_components;
  double noise_std_uv = 0.0;
  std::uint64_t seed = 0;
  /// Random per-channel phases when true; cosine phase 0 otherwise.
  bool random_phase = true;
  std::vector<std::string> channel_names;  // defaults to Ch1..ChN

  void validate() const;
};

/// Sum of class-gained sinusoids plus white Gaussian noise per channel.
/// `subject_index` picks an independent seed stream within the spec.
Recording generate_synthetic(const SyntheticSpec& spec, int class_label, int subject_index = 0);

}  // namespace singlem
