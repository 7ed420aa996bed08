// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "singlem/rng.hpp"
#include "singlem/svm.hpp"

namespace {

// Two Gaussian blobs in `dim` dimensions.
void blobs(std::size_t n, std::size_t dim, singlem::Matrix& x, std::vector<int>& y) {
  singlem::Rng rng(11);
  x = singlem::Matrix(n, dim);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < dim; ++j) x.data[i * dim + j] = rng.normal(y[i] ? 0.5 : -0.5, 1.0);
  }
}

void BM_SvmFitRbf(benchmark::State& state) {
  singlem::Matrix x;
  std::vector<int> y;
  blobs(static_cast<std::size_t>(state.range(0)), 192, x, y);
  singlem::SvmParams p;
  p.C = 1.0;
  p.gamma = 1.0 / 192.0;
  for (auto _ : state) benchmark::DoNotOptimize(singlem::SvmModel::fit(x, y, p));
}
BENCHMARK(BM_SvmFitRbf)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

}  // namespace
