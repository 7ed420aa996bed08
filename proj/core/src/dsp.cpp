// SPDX-License-Identifier: Apache-2.0
#include "singlem/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

#include "singlem/error.hpp"
#include "singlem/kv_file.hpp"

namespace singlem::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

// Unit-DC-gain Hamming-windowed sinc low-pass, cutoff as a fraction of rate.
std::vector<double> lowpass_taps(int num_taps, double cutoff) {
  std::vector<double> h(num_taps);
  const double centre = (num_taps - 1) / 2.0;
  for (int n = 0; n <= num_taps / 2; ++n) {
    const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (num_taps - 1));
    h[n] = 2.0 * cutoff * sinc(2.0 * cutoff * (n - centre)) * window;
    h[num_taps - 1 - n] = h[n];
  }
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> kaiser_lowpass(std::size_t half_len, double cutoff, double gain, double beta) {
  const std::size_t len = 2 * half_len + 1;
  std::vector<double> h(len);
  const double denom = std::cyl_bessel_i(0.0, beta);
  for (std::size_t n = 0; n < len; ++n) {
    const double t = (static_cast<double>(n) - static_cast<double>(half_len)) / static_cast<double>(half_len);
    const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - t * t))) / denom;
    const double k = static_cast<double>(n) - static_cast<double>(half_len);
    h[n] = gain * 2.0 * cutoff * sinc(2.0 * cutoff * k) * window;
  }
  return h;
}

void check_band(double low, double high, double rate) {
  if (!(low > 0.0) || !(low < high) || !(high < rate / 2.0)) {
    throw Error(ErrorCode::InvalidBand, "need 0 < " + format_double(low) + " < " + format_double(high) +
                                            " < " + format_double(rate / 2.0));
  }
}

// Causal FIR, zero initial state.
std::vector<double> fir_causal(std::span<const double> taps, std::span<const double> x) {
  std::vector<double> y(x.size(), 0.0);
  const std::size_t nt = taps.size();
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t kmax = std::min(nt, n + 1);
    double acc = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) acc += taps[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

std::vector<double> scale_segment(std::span<const double> x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] * 1e-6 * factor;
    if (!(std::abs(out[i]) < 1.0)) {
      throw Error(ErrorCode::AmplitudeOutOfRange,
                  "scaled sample " + std::to_string(i) + " = " + format_double(out[i]) + " outside (-1, 1)");
    }
  }
  return out;
}

}  // namespace

FilterSpec FilterSpec::bandpass(double low_hz, double high_hz, int num_taps) {
  FilterSpec s;
  s.kind = FilterKind::Bandpass;
  s.low_hz = low_hz;
  s.high_hz = high_hz;
  s.num_taps = num_taps;
  return s;
}

FilterSpec FilterSpec::notch(double notch_hz, int num_taps) {
  FilterSpec s;
  s.kind = FilterKind::Notch;
  s.notch_hz = notch_hz;
  s.num_taps = num_taps;
  return s;
}

PreprocessConfig PreprocessConfig::for_trials() {
  PreprocessConfig cfg;
  cfg.reject_enabled = false;
  return cfg;
}

std::vector<double> design_fir(const FilterSpec& spec, double rate_hz) {
  if (spec.num_taps < 3 || spec.num_taps % 2 == 0) {
    throw Error(ErrorCode::InvalidBand, "num_taps must be odd and >= 3");
  }
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidBand, "rate must be positive");

  switch (spec.kind) {
    case FilterKind::Bandpass:
    case FilterKind::BandpassBetaGamma: {
      const double low = spec.kind == FilterKind::BandpassBetaGamma ? 13.0 : spec.low_hz;
      const double high = spec.kind == FilterKind::BandpassBetaGamma ? 50.0 : spec.high_hz;
      check_band(low, high, rate_hz);
      auto hi = lowpass_taps(spec.num_taps, high / rate_hz);
      const auto lo = lowpass_taps(spec.num_taps, low / rate_hz);
      for (std::size_t i = 0; i < hi.size(); ++i) hi[i] -= lo[i];
      return hi;
    }
    case FilterKind::Notch: {
      const double low = spec.notch_hz - spec.notch_width_hz / 2.0;
      const double high = spec.notch_hz + spec.notch_width_hz / 2.0;
      check_band(low, high, rate_hz);
      auto h = lowpass_taps(spec.num_taps, low / rate_hz);
      const auto upper = lowpass_taps(spec.num_taps, high / rate_hz);
      // band-stop = delta - (lp(high) - lp(low))
      for (std::size_t i = 0; i < h.size(); ++i) h[i] -= upper[i];
      h[(h.size() - 1) / 2] += 1.0;
      return h;
    }
  }
  throw Error(ErrorCode::InvalidBand, "unknown filter kind");
}

std::complex<double> frequency_response(std::span<const double> taps, double freq_hz, double rate_hz) {
  const double centre = (static_cast<double>(taps.size()) - 1.0) / 2.0;
  const double omega = 2.0 * kPi * freq_hz / rate_hz;
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < taps.size(); ++n) {
    acc += taps[n] * std::polar(1.0, -omega * (static_cast<double>(n) - centre));
  }
  return acc;
}

std::vector<double> filtfilt(std::span<const double> taps, std::span<const double> x) {
  if (taps.empty()) throw Error(ErrorCode::InvalidBand, "empty filter");
  const std::size_t pad = 3 * taps.size();
  if (x.size() <= pad) {
    throw Error(ErrorCode::SignalTooShort, "filtfilt needs more than " + std::to_string(pad) +
                                               " samples, got " + std::to_string(x.size()));
  }
  const std::size_t n = x.size();
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    ext[i] = 2.0 * x[0] - x[pad - i];
    ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

  auto fwd = fir_causal(taps, ext);
  std::reverse(fwd.begin(), fwd.end());
  auto back = fir_causal(taps, fwd);
  std::reverse(back.begin(), back.end());
  return {back.begin() + static_cast<std::ptrdiff_t>(pad), back.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> resample(std::span<const double> x, double from_hz, double to_hz) {
  if (!(from_hz > 0.0) || !(to_hz > 0.0)) throw Error(ErrorCode::InvalidSpec, "rates must be positive");
  if (x.empty()) throw Error(ErrorCode::EmptySignal, "cannot resample an empty signal");
  if (from_hz == to_hz) return {x.begin(), x.end()};

  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * to_hz / from_hz));
  std::vector<double> y(out_len, 0.0);
  constexpr double kBeta = 8.6;
  constexpr std::size_t kZeroCrossings = 10;

  const bool integral = from_hz == std::floor(from_hz) && to_hz == std::floor(to_hz);
  std::uint64_t up = 0, down = 0;
  if (integral) {
    const auto f = static_cast<std::uint64_t>(from_hz);
    const auto t = static_cast<std::uint64_t>(to_hz);
    const auto g = std::gcd(f, t);
    up = t / g;
    down = f / g;
  }

  if (integral && std::max(up, down) <= 1000) {
    // Polyphase: y[m] = sum_i x[i] h[m*down - i*up + half], h at the upsampled rate.
    const std::size_t factor = std::max(up, down);
    const std::size_t half = kZeroCrossings * factor;
    const auto h = kaiser_lowpass(half, 0.5 / static_cast<double>(factor), static_cast<double>(up), kBeta);
    const auto n_in = static_cast<std::int64_t>(x.size());
    const auto p = static_cast<std::int64_t>(up);
    const auto q = static_cast<std::int64_t>(down);
    const auto hl = static_cast<std::int64_t>(half);
    for (std::size_t m = 0; m < out_len; ++m) {
      const std::int64_t pos = static_cast<std::int64_t>(m) * q;  // upsampled index of output
      // i*p in [pos - hl, pos + hl]
      std::int64_t i_lo = (pos - hl + p - 1) / p;
      if (pos - hl < 0) i_lo = 0;
      const std::int64_t i_hi = std::min<std::int64_t>(n_in - 1, (pos + hl) / p);
      double acc = 0.0;
      for (std::int64_t i = std::max<std::int64_t>(i_lo, 0); i <= i_hi; ++i) {
        acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(pos - i * p + hl)];
      }
      y[m] = acc;
    }
    return y;
  }

  // Irrational or very fine ratio: anti-alias (when shrinking), then linear interpolation.
  std::vector<double> src(x.begin(), x.end());
  if (to_hz < from_hz) {
    const std::size_t half = kZeroCrossings * static_cast<std::size_t>(std::ceil(from_hz / to_hz));
    const auto h = kaiser_lowpass(half, 0.5 * to_hz / from_hz, 1.0, kBeta);
    std::vector<double> filtered(src.size(), 0.0);
    const auto n = static_cast<std::int64_t>(src.size());
    const auto hl = static_cast<std::int64_t>(half);
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::int64_t k = -hl; k <= hl; ++k) {
        const std::int64_t j = i - k;
        if (j >= 0 && j < n) acc += h[static_cast<std::size_t>(k + hl)] * src[static_cast<std::size_t>(j)];
      }
      filtered[static_cast<std::size_t>(i)] = acc;
    }
    src = std::move(filtered);
  }
  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) * from_hz / to_hz;
    const auto i0 = static_cast<std::size_t>(std::floor(t));
    if (i0 + 1 >= src.size()) {
      y[m] = src.back();
    } else {
      const double frac = t - static_cast<double>(i0);
      y[m] = (1.0 - frac) * src[i0] + frac * src[i0 + 1];
    }
  }
  return y;
}

std::vector<Segment> reject_artifacts(std::span<const double> x, double threshold_uv) {
  std::vector<Segment> segments;
  std::size_t i = 0;
  while (i < x.size()) {
    while (i < x.size() && !(std::abs(x[i]) <= threshold_uv)) ++i;
    const std::size_t start = i;
    while (i < x.size() && std::abs(x[i]) <= threshold_uv) ++i;
    if (i > start) segments.push_back({start, i});
  }
  return segments;
}

std::vector<std::vector<double>> preprocess_channel(std::span<const double> x, double from_hz,
                                                    const PreprocessConfig& cfg) {
  if (!(cfg.scale_factor > 0.0)) throw Error(ErrorCode::InvalidSpec, "scale_factor must be positive");
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteSample, "input sample is not finite");
  }
  const auto band = design_fir(FilterSpec::bandpass(cfg.band_low_hz, cfg.band_high_hz, cfg.num_taps), from_hz);
  auto y = filtfilt(band, x);
  if (cfg.notch_hz > 0.0 && cfg.notch_hz + 1.0 < from_hz / 2.0) {
    const auto notch = design_fir(FilterSpec::notch(cfg.notch_hz, cfg.num_taps), from_hz);
    y = filtfilt(notch, y);
  }
  y = resample(y, from_hz, cfg.target_rate_hz);

  std::vector<std::vector<double>> out;
  if (!cfg.reject_enabled) {
    out.push_back(scale_segment(y, cfg.scale_factor));
    return out;
  }
  for (const auto& seg : reject_artifacts(y, cfg.reject_threshold_uv)) {
    out.push_back(scale_segment(std::span<const double>(y).subspan(seg.start, seg.size()), cfg.scale_factor));
  }
  return out;
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  if (n == 0) return {};
  if (spectrum.size() != n / 2 + 1) throw Error(ErrorCode::WrongLength, "spectrum size must be n/2+1");
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  std::vector<double> out(n);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()), out.data(),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  return out;
}

std::vector<double> dft_band_mask(std::span<const double> x, std::size_t lo_bin, std::size_t hi_bin) {
  auto spectrum = rfft(x);
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    if (k < lo_bin || k > hi_bin) spectrum[k] = {0.0, 0.0};
  }
  return irfft(spectrum, x.size());
}

std::vector<double> bandpass_13_50(std::span<const double> token) {
  if (token.size() != 128) {
    throw Error(ErrorCode::WrongLength, "token must have 128 samples, got " + std::to_string(token.size()));
  }
  return dft_band_mask(token, 13, 50);
}

}  // namespace singlem::dsp
