// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "singlem/encoder.hpp"
#include "singlem/pretrain.hpp"
#include "singlem/rng.hpp"

namespace {

singlem::Tensor random_tokens(std::size_t batch, std::size_t len, std::size_t token_len) {
  singlem::Rng rng(7);
  std::vector<double> v(batch * len * token_len);
  for (auto& x : v) x = rng.normal(0.0, 0.3);
  return singlem::Tensor::from_values({batch, len, token_len}, std::move(v));
}

// Inference: one sequence of L tokens through the full encoder.
void BM_EncodeStandard(benchmark::State& state) {
  const singlem::Encoder enc(singlem::EncoderConfig::standard(), 1);
  const auto tokens = random_tokens(1, static_cast<std::size_t>(state.range(0)), 128);
  singlem::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(tokens));
}
BENCHMARK(BM_EncodeStandard)->Arg(6)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_EncodeCompact(benchmark::State& state) {
  const singlem::Encoder enc(singlem::EncoderConfig::compact(), 1);
  const auto tokens = random_tokens(1, static_cast<std::size_t>(state.range(0)), 128);
  singlem::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(tokens));
}
BENCHMARK(BM_EncodeCompact)->Arg(6)->Arg(32)->Unit(benchmark::kMillisecond);

// Forward + backward of the pretraining loss, batch 8.
void BM_LossBackwardCompact(benchmark::State& state) {
  const auto ec = singlem::EncoderConfig::compact();
  singlem::PretrainConfig pc;
  singlem::Pretrainer trainer(ec, pc, 1);
  const std::size_t L = static_cast<std::size_t>(state.range(0));
  const auto tokens = random_tokens(8, L, ec.token_len);
  singlem::Rng rng(3);
  std::vector<singlem::MaskPlan> plans;
  for (int b = 0; b < 8; ++b) plans.push_back(singlem::MaskPlan::sample(L, 0.5, rng));
  const auto P = singlem::band_projector(ec.token_len, pc.band_lo_bin, pc.band_hi_bin);
  auto& enc = trainer.encoder();
  for (auto _ : state) {
    const auto e = enc.embed_tokens(enc.temporal_encode(tokens));
    const auto recon = trainer.decoder().decode(enc.global_encode(singlem::apply_mask(e, plans)));
    auto loss = singlem::pretrain_loss(tokens, recon, plans, pc, P).total;
    loss.backward();
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_LossBackwardCompact)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
