// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "singlem/checkpoint.hpp"
#include "singlem/encoder.hpp"
#include "singlem/optim.hpp"
#include "singlem/tokenizer.hpp"

namespace singlem {

/// Masked token positions for one sequence: floor(p * L) indices drawn
/// uniformly without replacement, kept sorted.
struct MaskPlan {
  std::size_t length = 0;
  std::vector<std::size_t> masked;
  double proportion = 0.5;

  static MaskPlan sample(std::size_t length, double proportion, Rng& rng);
  static MaskPlan none(std::size_t length);
  bool is_masked(std::size_t i) const;
};

struct PretrainConfig {
  double lambda_masked = 1.0;
  double lambda_unmasked = 1.0;
  double lambda_spectral = 0.1;
  double huber_delta = 1.0;
  double mask_ratio = 0.5;
  std::size_t batch_size = 64;
  std::size_t epochs = 16;
  /// Explicit optimisation step count; 0 derives it from epochs and corpus size.
  std::int64_t steps = 0;
  std::size_t min_seq_len = 8;
  std::size_t max_seq_len = 32;
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  AdamWConfig adam;
  /// DFT bins kept by the spectral term (bin k = k Hz for one-second tokens).
  std::size_t band_lo_bin = 13;
  std::size_t band_hi_bin = 50;
  std::int64_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KeyValueFile& kv, const std::string& prefix = "pretrain.") const;
  static PretrainConfig read(const KeyValueFile& kv, const std::string& prefix = "pretrain.");
};

/// Shared affine map from r-dimensional representations back to tokens.
class Decoder {
 public:
  Decoder(std::size_t repr_dim, std::size_t token_len, Rng& rng);

  /// (..., L, r) -> (..., L, l)
  Tensor decode(const Tensor& representations) const;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  ParameterSet params_;
  Tensor weight_;  // (r, l)
  Tensor bias_;    // (l)
};

/// Zeroes the masked rows of (L, D) embeddings, or of (B, L, D) with one
/// plan per sequence. Throws PlanMismatch.
Tensor apply_mask(const Tensor& embeddings, const MaskPlan& plan);
Tensor apply_mask(const Tensor& embeddings, const std::vector<MaskPlan>& plans);

/// Symmetric (n x n) projector keeping DFT bins [lo, hi] of an n-point real
/// signal: x * P equals the inverse DFT of the band-masked spectrum.
Tensor band_projector(std::size_t n, std::size_t lo_bin, std::size_t hi_bin);

struct LossTerms {
  Tensor total;
  Tensor masked;
  Tensor unmasked;
  Tensor spectral;
};

/// Masked / unmasked mean Huber terms and the band-limited squared error,
/// averaged over the batch. An empty masked (or unmasked) set contributes 0.
/// tokens/recon are (L, l) with one plan or (B, L, l) with B plans.
LossTerms pretrain_loss(const Tensor& tokens, const Tensor& recon, const std::vector<MaskPlan>& plans,
                        const PretrainConfig& cfg, const Tensor& projector);
LossTerms pretrain_loss(const Tensor& tokens, const Tensor& recon, const MaskPlan& plan, const PretrainConfig& cfg);

struct LossRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  double masked = 0.0;
  double unmasked = 0.0;
  double spectral = 0.0;
};

/// Encoder + decoder + optimiser state for masked-autoencoder training.
/// Step k uses batch seed mix(seed, k), so a run resumed from a checkpoint
/// replays exactly the batches of an uninterrupted run.
class Pretrainer {
 public:
  Pretrainer(const EncoderConfig& encoder_cfg, const PretrainConfig& cfg, std::int64_t total_steps);

  static Pretrainer from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  /// Steps needed for cfg.epochs passes over a corpus.
  static std::int64_t derive_total_steps(const PretrainConfig& cfg, const TokenStream& corpus);

  LossRecord step(const TokenStream& corpus);
  /// Runs until `until_step` (or total_steps); calls `on_step` after each step.
  void train(const TokenStream& corpus, std::optional<std::int64_t> until_step = std::nullopt,
             const std::function<void(const Pretrainer&, const LossRecord&)>& on_step = {});

  /// Masked forward pass + loss, no gradient recording.
  LossTerms evaluate(const std::vector<std::vector<double>>& sequences, std::size_t seq_len,
                     const std::vector<MaskPlan>& plans) const;

  const Encoder& encoder() const { return encoder_; }
  Encoder& encoder() { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  const PretrainConfig& config() const { return cfg_; }
  std::int64_t current_step() const { return opt_.step; }
  std::int64_t total_steps() const { return total_steps_; }
  const std::vector<LossRecord>& history() const { return history_; }

 private:
  PretrainConfig cfg_;
  std::int64_t total_steps_;
  Encoder encoder_;
  Decoder decoder_;
  ParameterSet all_params_;
  AdamWState opt_;
  Tensor projector_;
  std::vector<LossRecord> history_;
};

/// Rebuilds the encoder stored in a pretraining checkpoint.
Encoder load_encoder(const Checkpoint& ckpt);

/// CSV: step,lr,total,l_masked,l_unmasked,l_bg
std::string loss_history_csv(const std::vector<LossRecord>& history);

}  // namespace singlem
