// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace singlem::dsp {

enum class FilterKind { Bandpass, Notch, BandpassBetaGamma };

struct FilterSpec {
  FilterKind kind = FilterKind::Bandpass;
  double low_hz = 0.5;
  double high_hz = 50.0;
  double notch_hz = 50.0;
  double notch_width_hz = 2.0;
  int num_taps = 513;

  static FilterSpec bandpass(double low_hz, double high_hz, int num_taps = 513);
  static FilterSpec notch(double notch_hz, int num_taps = 513);
};

/// Defaults reproduce the pretraining pipeline: 0.5-50 Hz band-pass, 50 Hz
/// notch, 128 Hz output, +/-100 uV rejection, 1e4 scaling of volts.
struct PreprocessConfig {
  double band_low_hz = 0.5;
  double band_high_hz = 50.0;
  double notch_hz = 50.0;
  double target_rate_hz = 128.0;
  double reject_threshold_uv = 100.0;
  double scale_factor = 1e4;
  bool reject_enabled = true;
  int num_taps = 513;

  /// Downstream trials: identical filtering, no artifact rejection.
  static PreprocessConfig for_trials();
};

/// Half-open sample range [start, end).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Hamming-windowed sinc, linear phase (symmetric taps). Throws InvalidBand.
std::vector<double> design_fir(const FilterSpec& spec, double rate_hz);

/// Complex response of `taps` at `freq_hz`, referenced to the filter centre
/// so a symmetric filter yields a real value.
std::complex<double> frequency_response(std::span<const double> taps, double freq_hz, double rate_hz);

/// Forward-backward FIR with odd reflection padding of 3*len(taps).
/// Requires len(x) > 3*len(taps); throws SignalTooShort otherwise.
std::vector<double> filtfilt(std::span<const double> taps, std::span<const double> x);

/// Output length round(len(x) * to / from). Rational ratios go through a
/// Kaiser-windowed polyphase filter; other ratios are low-passed and linearly
/// interpolated.
std::vector<double> resample(std::span<const double> x, double from_hz, double to_hz);

/// Maximal runs where |x| <= threshold.
std::vector<Segment> reject_artifacts(std::span<const double> x, double threshold_uv);

/// band-pass -> notch -> resample -> reject (optional) -> scale.
/// Input in microvolts; output segments at cfg.target_rate_hz with |v| < 1.
std::vector<std::vector<double>> preprocess_channel(std::span<const double> x, double from_hz,
                                                    const PreprocessConfig& cfg);

/// Exact-DFT band mask: keeps bins [13, 50] of a 128-sample (one second)
/// token. Throws WrongLength for any other length.
std::vector<double> bandpass_13_50(std::span<const double> token);

/// Keeps DFT bins lo_bin..hi_bin (inclusive) of a real signal.
std::vector<double> dft_band_mask(std::span<const double> x, std::size_t lo_bin, std::size_t hi_bin);

/// Real-input DFT, bins 0..n/2.
std::vector<std::complex<double>> rfft(std::span<const double> x);

/// Inverse of rfft for an n-point signal (normalised by 1/n).
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

}  // namespace singlem::dsp
