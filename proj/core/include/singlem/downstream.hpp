// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "singlem/dsp.hpp"
#include "singlem/encoder.hpp"
#include "singlem/metrics.hpp"
#include "singlem/signal_io.hpp"
#include "singlem/svm.hpp"

namespace singlem {

/// One labelled multi-channel trial at 128 Hz, already preprocessed.
struct Trial {
  std::string subject_id;
  int label = 0;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;
  double sampling_rate_hz = 128.0;

  void validate() const;
  double duration_s() const;
};

/// Filters, resamples and scales a labelled recording (no amplitude rejection).
/// Trials shorter than 3x the filter length use the longest odd filter that fits.
Trial make_trial(const Recording& rec, const dsp::PreprocessConfig& cfg = dsp::PreprocessConfig::for_trials());

struct ChannelSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct TrialFeatures {
  std::string subject_id;
  int label = 0;
  std::vector<double> vector;
  std::vector<ChannelSlice> channel_slices;
};

/// Per channel: stride-96 tokens -> encoder -> (L, r) flattened row-major;
/// channel blocks concatenated in trial order. Throws SignalTooShort.
TrialFeatures extract_features(const Trial& trial, const Encoder& encoder);

/// Per channel: real DFT, the round(k * seconds) largest-magnitude bins
/// among 1..n/2 (ties to the lower bin), magnitudes then phases.
/// Throws TooFewBins.
TrialFeatures fourier_features(const Trial& trial, double k_per_second);

/// Top-k bin indices of one channel spectrum, in rank order.
std::vector<std::size_t> top_fourier_bins(std::span<const double> x, std::size_t count);

/// Per-dimension z-scoring; constant dimensions get unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

/// Features stacked for evaluation.
struct FeatureTable {
  std::vector<std::string> subjects;
  std::vector<int> labels;
  Matrix x;
  std::vector<ChannelSlice> channel_slices;

  static FeatureTable from(const std::vector<TrialFeatures>& rows);
  /// Columns of one channel only.
  FeatureTable channel(const std::string& name) const;
  std::size_t size() const { return labels.size(); }
};

struct FoldSplit {
  std::string test_subject;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// One fold per subject (sorted by id). The remaining trials are split per
/// label into validation (round(val_fraction * count)) and training.
/// Throws TooFewSubjects.
std::vector<FoldSplit> loso_splits(const std::vector<std::string>& subjects, const std::vector<int>& labels,
                                   double val_fraction, std::uint64_t seed);

struct Grid {
  std::vector<double> c_values;
  std::vector<double> gamma_values;

  /// C = logspace(-2, 3, 7), gamma = 1e-4 .. 1e1 by decades.
  static Grid standard();
};

struct TuneResult {
  double C = 0.0;
  double gamma = 0.0;
  double val_macro_f1 = 0.0;
};

/// Exhaustive grid; maximal validation macro-F1, ties to smaller C then smaller gamma.
/// Inputs must already be standardized.
TuneResult tune_hyperparams(const Matrix& train_x, std::span<const int> train_y, const Matrix& val_x,
                            std::span<const int> val_y, const Grid& grid, KernelKind kernel = KernelKind::Rbf,
                            double tol = 1e-3);

struct EvalConfig {
  KernelKind kernel = KernelKind::Rbf;
  Grid grid = Grid::standard();
  double val_fraction = 0.2;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct FoldResult {
  std::string test_subject;
  Metrics metrics;
  double C = 0.0;
  double gamma = 0.0;
  double val_macro_f1 = 0.0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::vector<std::vector<std::size_t>> confusion;
};

struct EvalReport {
  std::vector<FoldResult> folds;
  Metrics mean;
  Metrics stddev;  // population std over folds

  std::string csv() const;
  std::string summary(const std::string& title) const;
};

/// Called once per fold with its split and the standardizer fitted for it.
using FoldObserver = std::function<void(const FoldSplit&, const Standardizer&)>;

EvalReport loso_evaluate(const FeatureTable& table, const EvalConfig& cfg, const FoldObserver& observer = {});

struct ChannelResult {
  std::string channel;
  Metrics metrics;
  double normalized_accuracy = 0.0;
};

/// LOSO on every channel's slice alone. Normalized accuracy is min-max over
/// channels (1.0 for all when every channel scores the same).
std::vector<ChannelResult> per_channel_evaluate(const FeatureTable& table, const EvalConfig& cfg);
std::string per_channel_csv(const std::vector<ChannelResult>& results);

}  // namespace singlem
