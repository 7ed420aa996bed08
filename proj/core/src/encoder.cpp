// SPDX-License-Identifier: Apache-2.0
#include "singlem/encoder.hpp"

#include <algorithm>

#include "singlem/error.hpp"

namespace singlem {

EncoderConfig EncoderConfig::standard() { return {}; }

EncoderConfig EncoderConfig::compact() {
  EncoderConfig c;
  c.conv_channels = {4, 4, 1};
  c.embed_dim = 32;
  c.local_layers = 1;
  c.local_heads = 2;
  c.bottleneck_dim = 8;
  c.model_dim = 32;
  c.global_layers = 2;
  c.global_heads = 4;
  return c;
}

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.token_len = 16;
  c.kernels = {3, 5, 1};
  c.conv_channels = {2, 2, 1};
  c.embed_dim = 8;
  c.window = 5;
  c.local_layers = 1;
  c.local_heads = 2;
  c.bottleneck_dim = 4;
  c.model_dim = 8;
  c.global_layers = 1;
  c.global_heads = 2;
  c.repr_dim = 4;
  c.max_seq_len = 16;
  return c;
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidSpec, "encoder config: " + msg); };
  if (token_len == 0) fail("token_len must be positive");
  for (auto k : kernels) {
    if (k % 2 == 0) throw Error(ErrorCode::EvenKernel, "encoder kernel sizes must be odd");
  }
  if (conv_channels[0] == 0 || conv_channels[1] == 0) fail("conv channels must be positive");
  if (conv_channels[2] != 1) fail("last conv stage must have one output channel");
  if (window % 2 == 0) fail("window must be odd");
  if (embed_dim < 2 || model_dim == 0 || repr_dim == 0 || max_seq_len == 0) fail("dimensions must be positive");
  if (!(bottleneck_dim > 0 && bottleneck_dim < embed_dim)) fail("need 0 < d_emb < d");
  if (local_heads == 0 || embed_dim % local_heads != 0) {
    throw Error(ErrorCode::HeadDivisibility, "embed_dim not divisible by local_heads");
  }
  if (global_heads == 0 || model_dim % global_heads != 0) {
    throw Error(ErrorCode::HeadDivisibility, "model_dim not divisible by global_heads");
  }
}

void EncoderConfig::write(KeyValueFile& kv, const std::string& p) const {
  kv.set(p + "token_len", std::to_string(token_len));
  kv.set(p + "kernels", std::to_string(kernels[0]) + "," + std::to_string(kernels[1]) + "," + std::to_string(kernels[2]));
  kv.set(p + "conv_channels", std::to_string(conv_channels[0]) + "," + std::to_string(conv_channels[1]) + "," +
                                  std::to_string(conv_channels[2]));
  kv.set(p + "embed_dim", std::to_string(embed_dim));
  kv.set(p + "window", std::to_string(window));
  kv.set(p + "local_layers", std::to_string(local_layers));
  kv.set(p + "local_heads", std::to_string(local_heads));
  kv.set(p + "bottleneck_dim", std::to_string(bottleneck_dim));
  kv.set(p + "model_dim", std::to_string(model_dim));
  kv.set(p + "global_layers", std::to_string(global_layers));
  kv.set(p + "global_heads", std::to_string(global_heads));
  kv.set(p + "repr_dim", std::to_string(repr_dim));
  kv.set(p + "max_seq_len", std::to_string(max_seq_len));
}

EncoderConfig EncoderConfig::read(const KeyValueFile& kv, const std::string& p) {
  EncoderConfig c;
  auto sz = [&](const std::string& key, std::size_t fallback) {
    const long long v = kv.get_int(p + key, static_cast<long long>(fallback));
    if (v < 0) throw Error(ErrorCode::UsageError, "key '" + p + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  auto triple = [&](const std::string& key, std::array<std::size_t, 3> fallback) {
    auto text = kv.get(p + key);
    if (!text) return fallback;
    const auto parts = split(*text, ',');
    if (parts.size() != 3) throw Error(ErrorCode::UsageError, "key '" + p + key + "' needs three values");
    std::array<std::size_t, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) out[i] = std::stoul(parts[i]);
    return out;
  };
  c.token_len = sz("token_len", c.token_len);
  c.kernels = triple("kernels", c.kernels);
  c.conv_channels = triple("conv_channels", c.conv_channels);
  c.embed_dim = sz("embed_dim", c.embed_dim);
  c.window = sz("window", c.window);
  c.local_layers = sz("local_layers", c.local_layers);
  c.local_heads = sz("local_heads", c.local_heads);
  c.bottleneck_dim = sz("bottleneck_dim", c.bottleneck_dim);
  c.model_dim = sz("model_dim", c.model_dim);
  c.global_layers = sz("global_layers", c.global_layers);
  c.global_heads = sz("global_heads", c.global_heads);
  c.repr_dim = sz("repr_dim", c.repr_dim);
  c.max_seq_len = sz("max_seq_len", c.max_seq_len);
  c.validate();
  return c;
}

Tensor transformer_layer(const Tensor& x, const TransformerLayer& layer, std::size_t heads) {
  const Tensor a = add(x, multi_head_attention(layer_norm(x, layer.ln1_gain, layer.ln1_bias), heads, layer.attn));
  const Tensor hidden = gelu(linear(layer_norm(a, layer.ln2_gain, layer.ln2_bias), layer.ff1_w, layer.ff1_b));
  return add(a, linear(hidden, layer.ff2_w, layer.ff2_b));
}

TransformerLayer Encoder::make_layer(const std::string& prefix, std::size_t width, Rng& rng) {
  TransformerLayer l;
  auto ones = [&](const std::string& name) { return params_.add(prefix + name, Tensor::full({width}, 1.0, true)); };
  auto zeros = [&](const std::string& name, std::size_t n) { return params_.add(prefix + name, Tensor::zeros({n}, true)); };
  auto weight = [&](const std::string& name, std::size_t in, std::size_t out) {
    return params_.add(prefix + name, init_uniform_fan_in({in, out}, in, rng));
  };
  l.ln1_gain = ones("ln1.gain");
  l.ln1_bias = zeros("ln1.bias", width);
  l.attn.wq = weight("attn.wq", width, width);
  l.attn.bq = zeros("attn.bq", width);
  l.attn.wk = weight("attn.wk", width, width);
  l.attn.bk = zeros("attn.bk", width);
  l.attn.wv = weight("attn.wv", width, width);
  l.attn.bv = zeros("attn.bv", width);
  l.attn.wo = weight("attn.wo", width, width);
  l.attn.bo = zeros("attn.bo", width);
  l.ln2_gain = ones("ln2.gain");
  l.ln2_bias = zeros("ln2.bias", width);
  l.ff1_w = weight("ffn.w1", width, 4 * width);
  l.ff1_b = zeros("ffn.b1", 4 * width);
  l.ff2_w = weight("ffn.w2", 4 * width, width);
  l.ff2_b = zeros("ffn.b2", width);
  return l;
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;

  std::size_t in_ch = 1;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string p = "temporal.conv" + std::to_string(s + 1) + ".";
    const std::size_t out_ch = c.conv_channels[s];
    conv_[s].weight = params_.add(p + "weight", init_uniform_fan_in({out_ch, in_ch, c.kernels[s]}, in_ch * c.kernels[s], rng));
    conv_[s].bias = params_.add(p + "bias", Tensor::zeros({out_ch}, true));
    if (s < 2) {
      const std::string n = "temporal.ln" + std::to_string(s + 1) + ".";
      conv_[s].ln_gain = params_.add(n + "gain", Tensor::full({out_ch}, 1.0, true));
      conv_[s].ln_bias = params_.add(n + "bias", Tensor::zeros({out_ch}, true));
    }
    in_ch = out_ch;
  }

  proj_ = params_.add("embed.proj", init_uniform_fan_in({c.token_len, c.embed_dim}, c.token_len, rng));
  summary_ = params_.add("embed.summary_token", init_normal({c.embed_dim}, 0.02, rng));
  local_pos_ = params_.add("embed.pos", init_normal({c.window + 1, c.embed_dim}, 0.02, rng));
  for (std::size_t i = 0; i < c.local_layers; ++i) {
    local_.push_back(make_layer("embed.layers." + std::to_string(i) + ".", c.embed_dim, rng));
  }
  const std::size_t half = c.embed_dim / 2;
  b1_w_ = params_.add("embed.bottleneck.w1", init_uniform_fan_in({c.embed_dim, half}, c.embed_dim, rng));
  b1_b_ = params_.add("embed.bottleneck.b1", Tensor::zeros({half}, true));
  b2_w_ = params_.add("embed.bottleneck.w2", init_uniform_fan_in({half, c.bottleneck_dim}, half, rng));
  b2_b_ = params_.add("embed.bottleneck.b2", Tensor::zeros({c.bottleneck_dim}, true));
  b3_w_ = params_.add("embed.bottleneck.w3", init_uniform_fan_in({c.bottleneck_dim, c.model_dim}, c.bottleneck_dim, rng));
  b3_b_ = params_.add("embed.bottleneck.b3", Tensor::zeros({c.model_dim}, true));

  global_pos_ = params_.add("global.pos", init_normal({c.max_seq_len, c.model_dim}, 0.02, rng));
  for (std::size_t i = 0; i < c.global_layers; ++i) {
    global_.push_back(make_layer("global.layers." + std::to_string(i) + ".", c.model_dim, rng));
  }
  final_gain_ = params_.add("global.ln_final.gain", Tensor::full({c.model_dim}, 1.0, true));
  final_bias_ = params_.add("global.ln_final.bias", Tensor::zeros({c.model_dim}, true));
  out_proj_ = params_.add("global.proj", init_uniform_fan_in({c.model_dim, c.repr_dim}, c.model_dim, rng));
}

Tensor Encoder::temporal_encode(const Tensor& tokens) const {
  const Shape& s = tokens.shape();
  if (s.empty() || s.back() != config_.token_len) {
    throw Error(ErrorCode::ShapeMismatch, "temporal_encode expects (..., " + std::to_string(config_.token_len) +
                                              "), got " + to_string(s));
  }
  const std::size_t n = tokens.numel() / config_.token_len;
  Tensor x = reshape(tokens, {n, 1, config_.token_len});
  for (std::size_t stage = 0; stage < 3; ++stage) {
    x = conv1d(x, conv_[stage].weight, conv_[stage].bias);
    // normalisation runs over the channel axis at every time step
    if (stage < 2) x = layer_norm(x, conv_[stage].ln_gain, conv_[stage].ln_bias, -2);
    x = elu(x);
  }
  return reshape(x, s);
}

Tensor Encoder::embed_tokens(const Tensor& features) const {
  const Shape& s = features.shape();
  const auto& c = config_;
  if (s.size() < 2 || s.back() != c.token_len) {
    throw Error(ErrorCode::ShapeMismatch, "embed_tokens expects (..., L, " + std::to_string(c.token_len) + "), got " +
                                              to_string(s));
  }
  const std::size_t len = s[s.size() - 2];
  if (len == 0) throw Error(ErrorCode::EmptySequence, "embed_tokens needs at least one token");
  const std::size_t batch = features.numel() / (len * c.token_len);
  const std::size_t width = c.window + 1;
  const auto radius = static_cast<std::ptrdiff_t>(c.window / 2);

  const Tensor v = reshape(matmul(features, proj_), {batch, len, c.embed_dim});
  // Row 0 of the augmented sequence is the summary token; window rows are
  // neighbours with edge replication, shifted by one.
  const Tensor augmented = concat({broadcast_to(reshape(summary_, {1, 1, c.embed_dim}), {batch, 1, c.embed_dim}), v}, 1);
  std::vector<std::size_t> index;
  index.reserve(len * width);
  const auto last = static_cast<std::ptrdiff_t>(len) - 1;
  for (std::size_t i = 0; i < len; ++i) {
    index.push_back(0);
    for (std::ptrdiff_t o = -radius; o <= radius; ++o) {
      index.push_back(1 + static_cast<std::size_t>(std::clamp(static_cast<std::ptrdiff_t>(i) + o, std::ptrdiff_t{0}, last)));
    }
  }
  Tensor h = add(reshape(gather(augmented, 1, index), {batch, len, width, c.embed_dim}), local_pos_);
  for (const auto& layer : local_) h = transformer_layer(h, layer, c.local_heads);

  const Tensor z = reshape(gather(h, 2, {0}), {batch, len, c.embed_dim});
  const Tensor b1 = gelu(linear(z, b1_w_, b1_b_));
  const Tensor b2 = gelu(linear(b1, b2_w_, b2_b_));
  const Tensor e = linear(b2, b3_w_, b3_b_);

  Shape out(s.begin(), s.end() - 1);
  out.push_back(c.model_dim);
  return reshape(e, out);
}

Tensor Encoder::global_encode(const Tensor& embeddings) const {
  const Shape& s = embeddings.shape();
  const auto& c = config_;
  if (s.size() < 2 || s.back() != c.model_dim) {
    throw Error(ErrorCode::ShapeMismatch, "global_encode expects (..., L, " + std::to_string(c.model_dim) + "), got " +
                                              to_string(s));
  }
  const std::size_t len = s[s.size() - 2];
  if (len == 0) throw Error(ErrorCode::EmptySequence, "global_encode needs at least one token");
  if (len > c.max_seq_len) {
    throw Error(ErrorCode::SequenceTooLong,
                std::to_string(len) + " tokens exceed max_seq_len " + std::to_string(c.max_seq_len));
  }
  std::vector<std::size_t> rows(len);
  for (std::size_t i = 0; i < len; ++i) rows[i] = i;
  Tensor g = add(embeddings, gather(global_pos_, 0, rows));
  for (const auto& layer : global_) g = transformer_layer(g, layer, c.global_heads);
  g = layer_norm(g, final_gain_, final_bias_);
  return matmul(g, out_proj_);
}

Tensor Encoder::encode(const Tensor& tokens) const {
  return global_encode(embed_tokens(temporal_encode(tokens)));
}

std::size_t encoder_parameter_count(const EncoderConfig& c) {
  std::size_t n = 0;
  std::size_t in_ch = 1;
  for (std::size_t s = 0; s < 3; ++s) {
    n += c.conv_channels[s] * in_ch * c.kernels[s] + c.conv_channels[s];
    if (s < 2) n += 2 * c.conv_channels[s];
    in_ch = c.conv_channels[s];
  }
  auto layer = [](std::size_t w) { return 2 * w + 4 * (w * w + w) + 2 * w + (w * 4 * w + 4 * w) + (4 * w * w + w); };
  const std::size_t d = c.embed_dim;
  n += c.token_len * d + d + (c.window + 1) * d;
  n += c.local_layers * layer(d);
  n += d * (d / 2) + d / 2 + (d / 2) * c.bottleneck_dim + c.bottleneck_dim + c.bottleneck_dim * c.model_dim + c.model_dim;
  n += c.max_seq_len * c.model_dim;
  n += c.global_layers * layer(c.model_dim);
  n += 2 * c.model_dim + c.model_dim * c.repr_dim;
  return n;
}

}  // namespace singlem
