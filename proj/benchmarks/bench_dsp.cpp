// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "singlem/dsp.hpp"
#include "singlem/rng.hpp"

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  singlem::Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal(0.0, 20.0);
  return x;
}

void BM_Filtfilt(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  const auto taps = singlem::dsp::design_fir(singlem::dsp::FilterSpec::bandpass(0.5, 50.0), 512.0);
  for (auto _ : state) benchmark::DoNotOptimize(singlem::dsp::filtfilt(taps, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Filtfilt)->Arg(512 * 10)->Arg(512 * 60);

void BM_Resample(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(singlem::dsp::resample(x, 500.0, 128.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Resample)->Arg(500 * 10)->Arg(500 * 60);

// Full pipeline on one minute of a 512 Hz channel.
void BM_PreprocessChannel(benchmark::State& state) {
  const auto x = noise(512 * 60, 3);
  const singlem::dsp::PreprocessConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(singlem::dsp::preprocess_channel(x, 512.0, cfg));
}
BENCHMARK(BM_PreprocessChannel)->Unit(benchmark::kMillisecond);

void BM_Bandpass13to50(benchmark::State& state) {
  const auto x = noise(128, 4);
  for (auto _ : state) benchmark::DoNotOptimize(singlem::dsp::bandpass_13_50(x));
}
BENCHMARK(BM_Bandpass13to50);

}  // namespace
