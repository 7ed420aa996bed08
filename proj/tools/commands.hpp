// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "singlem/downstream.hpp"
#include "singlem/kv_file.hpp"

namespace singlem::cli {

/// Everything a subcommand can receive. Flags that are set override the
/// matching config keys.
struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;  // raw key=value pairs from --set
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  std::vector<std::filesystem::path> inputs;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> resume;
  std::optional<double> notch_hz;
  std::optional<std::size_t> max_seq_len;
  std::optional<double> fourier_k;
  std::optional<std::int64_t> stop_after;
  bool per_channel = false;
};

struct RunManifest {
  std::string command;
  KeyValueFile config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_time_s = 0.0;

  std::string json() const;
};

inline constexpr const char* kManifestName = "run_manifest.json";

/// Config file, then --set pairs, then dedicated flags.
KeyValueFile effective_config(const CommandOptions& opt);

/// "k=8" or "8".
double parse_fourier_arg(const std::string& text);

/// Random recordings (continuous or cut into labelled trials).
RunManifest cmd_synth(const CommandOptions& opt);
/// Filter/resample/reject every channel; one container per kept segment.
RunManifest cmd_preprocess(const CommandOptions& opt);
/// Masked-autoencoder training; writes checkpoint.ckpt and loss.csv.
RunManifest cmd_pretrain(const CommandOptions& opt);
/// One feature row per trial container into features.csv.
RunManifest cmd_extract(const CommandOptions& opt);
/// LOSO report from features.csv, or from trials plus a checkpoint.
RunManifest cmd_evaluate(const CommandOptions& opt);

/// CSV with subject,label,<channel>:<j>... columns.
std::string features_csv(const std::vector<TrialFeatures>& rows);
FeatureTable read_features_csv(const std::filesystem::path& path);

}  // namespace singlem::cli
