// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "singlem/kv_file.hpp"
#include "singlem/parameters.hpp"

namespace singlem {

struct EncoderConfig {
  std::size_t token_len = 128;
  std::array<std::size_t, 3> kernels{3, 61, 1};
  std::array<std::size_t, 3> conv_channels{32, 32, 1};
  std::size_t embed_dim = 128;  // d
  std::size_t window = 5;       // w
  std::size_t local_layers = 4;
  std::size_t local_heads = 4;
  std::size_t bottleneck_dim = 32;  // d_emb
  std::size_t model_dim = 128;      // D
  std::size_t global_layers = 12;
  std::size_t global_heads = 8;
  std::size_t repr_dim = 16;  // r
  std::size_t max_seq_len = 64;

  /// Full-size model (the struct defaults).
  static EncoderConfig standard();
  /// Reduced widths/depths on 128-sample tokens; trains on one CPU core.
  static EncoderConfig compact();
  /// 16-sample tokens, d = D = 8, one layer per stage, r = 4.
  static EncoderConfig toy();

  /// Throws InvalidSpec / EvenKernel / HeadDivisibility.
  void validate() const;

  /// `encoder.*` keys for manifests; from_kv validates the result.
  void write(KeyValueFile& kv, const std::string& prefix = "encoder.") const;
  static EncoderConfig read(const KeyValueFile& kv, const std::string& prefix = "encoder.");

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Pre-LN transformer block: x + MHSA(LN(x)), then + FFN(LN(.)) with a
/// 4x GELU hidden layer.
struct TransformerLayer {
  Tensor ln1_gain, ln1_bias;
  AttentionWeights attn;
  Tensor ln2_gain, ln2_bias;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

Tensor transformer_layer(const Tensor& x, const TransformerLayer& layer, std::size_t heads);

/// Three-stage single-channel encoder:
///   temporal CNN per token -> windowed local transformer + bottleneck ->
///   global transformer and projection to r values per token.
/// All stages accept arbitrary leading batch dimensions.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// (..., l) -> (..., l). conv/LN/ELU twice, then a 1x1 conv and ELU.
  Tensor temporal_encode(const Tensor& tokens) const;
  /// (..., L, l) temporal features -> (..., L, D) contextual embeddings.
  Tensor embed_tokens(const Tensor& features) const;
  /// (..., L, D) -> (..., L, r). Throws SequenceTooLong past max_seq_len.
  Tensor global_encode(const Tensor& embeddings) const;
  /// (..., L, l) raw tokens -> (..., L, r).
  Tensor encode(const Tensor& tokens) const;

 private:
  EncoderConfig config_;
  ParameterSet params_;

  struct ConvStage {
    Tensor weight, bias, ln_gain, ln_bias;
  };
  std::array<ConvStage, 3> conv_;
  Tensor proj_;       // W_E (l, d)
  Tensor summary_;    // e_0 (d)
  Tensor local_pos_;  // P (w+1, d)
  std::vector<TransformerLayer> local_;
  Tensor b1_w_, b1_b_, b2_w_, b2_b_, b3_w_, b3_b_;
  Tensor global_pos_;  // Q (max_seq_len, D)
  std::vector<TransformerLayer> global_;
  Tensor final_gain_, final_bias_;
  Tensor out_proj_;  // W_R (D, r)

  TransformerLayer make_layer(const std::string& prefix, std::size_t width, Rng& rng);
};

/// Closed-form parameter count for a config.
std::size_t encoder_parameter_count(const EncoderConfig& config);

}  // namespace singlem
