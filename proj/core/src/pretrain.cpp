// SPDX-License-Identifier: Apache-2.0
#include "singlem/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "singlem/error.hpp"

namespace singlem {

namespace {

constexpr std::uint64_t kEncoderStream = 1;
constexpr std::uint64_t kDecoderStream = 2;
constexpr std::uint64_t kBatchStream = 3;

Decoder make_decoder(const EncoderConfig& ec, std::uint64_t seed) {
  Rng rng(mix_seed(seed, kDecoderStream));
  return Decoder(ec.repr_dim, ec.token_len, rng);
}

}  // namespace

MaskPlan MaskPlan::sample(std::size_t length, double proportion, Rng& rng) {
  if (!(proportion >= 0.0 && proportion <= 1.0)) throw Error(ErrorCode::InvalidSpec, "mask proportion outside [0, 1]");
  MaskPlan plan;
  plan.length = length;
  plan.proportion = proportion;
  const auto count = static_cast<std::size_t>(std::floor(proportion * static_cast<double>(length)));
  std::vector<std::size_t> idx(length);
  for (std::size_t i = 0; i < length; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(length - i));
    std::swap(idx[i], idx[j]);
  }
  plan.masked.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

MaskPlan MaskPlan::none(std::size_t length) {
  MaskPlan plan;
  plan.length = length;
  plan.proportion = 0.0;
  return plan;
}

bool MaskPlan::is_masked(std::size_t i) const { return std::binary_search(masked.begin(), masked.end(), i); }

void PretrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidSpec, "pretrain config: " + m); };
  if (lambda_masked < 0 || lambda_unmasked < 0 || lambda_spectral < 0) fail("loss weights must be >= 0");
  if (lambda_masked + lambda_unmasked + lambda_spectral == 0.0) fail("loss weights are all zero");
  if (!(huber_delta > 0.0)) fail("huber_delta must be > 0");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) fail("mask_ratio outside [0, 1]");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (min_seq_len == 0 || min_seq_len > max_seq_len) fail("need 1 <= min_seq_len <= max_seq_len");
  if (!(lr_max > 0.0) || !(lr_min >= 0.0) || lr_min > lr_max) fail("need 0 <= lr_min <= lr_max");
  if (band_lo_bin > band_hi_bin) fail("band bins reversed");
  if (steps < 0) fail("steps must be >= 0");
}

void PretrainConfig::write(KeyValueFile& kv, const std::string& p) const {
  kv.set(p + "lambda_masked", format_double(lambda_masked));
  kv.set(p + "lambda_unmasked", format_double(lambda_unmasked));
  kv.set(p + "lambda_spectral", format_double(lambda_spectral));
  kv.set(p + "huber_delta", format_double(huber_delta));
  kv.set(p + "mask_ratio", format_double(mask_ratio));
  kv.set(p + "batch_size", std::to_string(batch_size));
  kv.set(p + "epochs", std::to_string(epochs));
  kv.set(p + "steps", std::to_string(steps));
  kv.set(p + "min_seq_len", std::to_string(min_seq_len));
  kv.set(p + "max_seq_len", std::to_string(max_seq_len));
  kv.set(p + "lr_max", format_double(lr_max));
  kv.set(p + "lr_min", format_double(lr_min));
  kv.set(p + "beta1", format_double(adam.beta1));
  kv.set(p + "beta2", format_double(adam.beta2));
  kv.set(p + "weight_decay", format_double(adam.weight_decay));
  kv.set(p + "band_lo_bin", std::to_string(band_lo_bin));
  kv.set(p + "band_hi_bin", std::to_string(band_hi_bin));
  kv.set(p + "checkpoint_every", std::to_string(checkpoint_every));
  kv.set(p + "seed", std::to_string(seed));
}

PretrainConfig PretrainConfig::read(const KeyValueFile& kv, const std::string& p) {
  PretrainConfig c;
  auto sz = [&](const std::string& key, std::size_t fallback) {
    const long long v = kv.get_int(p + key, static_cast<long long>(fallback));
    if (v < 0) throw Error(ErrorCode::UsageError, "key '" + p + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.lambda_masked = kv.get_double(p + "lambda_masked", c.lambda_masked);
  c.lambda_unmasked = kv.get_double(p + "lambda_unmasked", c.lambda_unmasked);
  c.lambda_spectral = kv.get_double(p + "lambda_spectral", c.lambda_spectral);
  c.huber_delta = kv.get_double(p + "huber_delta", c.huber_delta);
  c.mask_ratio = kv.get_double(p + "mask_ratio", c.mask_ratio);
  c.batch_size = sz("batch_size", c.batch_size);
  c.epochs = sz("epochs", c.epochs);
  c.steps = kv.get_int(p + "steps", c.steps);
  c.min_seq_len = sz("min_seq_len", c.min_seq_len);
  c.max_seq_len = sz("max_seq_len", c.max_seq_len);
  c.lr_max = kv.get_double(p + "lr_max", c.lr_max);
  c.lr_min = kv.get_double(p + "lr_min", c.lr_min);
  c.adam.beta1 = kv.get_double(p + "beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double(p + "beta2", c.adam.beta2);
  c.adam.weight_decay = kv.get_double(p + "weight_decay", c.adam.weight_decay);
  c.band_lo_bin = sz("band_lo_bin", c.band_lo_bin);
  c.band_hi_bin = sz("band_hi_bin", c.band_hi_bin);
  c.checkpoint_every = kv.get_int(p + "checkpoint_every", c.checkpoint_every);
  c.seed = static_cast<std::uint64_t>(kv.get_int(p + "seed", 0));
  c.validate();
  return c;
}

Decoder::Decoder(std::size_t repr_dim, std::size_t token_len, Rng& rng) {
  weight_ = params_.add("weight", init_uniform_fan_in({repr_dim, token_len}, repr_dim, rng));
  bias_ = params_.add("bias", Tensor::zeros({token_len}, true));
}

Tensor Decoder::decode(const Tensor& representations) const { return linear(representations, weight_, bias_); }

Tensor apply_mask(const Tensor& embeddings, const MaskPlan& plan) {
  if (embeddings.dim() != 2) throw Error(ErrorCode::ShapeMismatch, "apply_mask expects (L, D)");
  return reshape(apply_mask(reshape(embeddings, {1, embeddings.size(0), embeddings.size(1)}), std::vector<MaskPlan>{plan}),
                 embeddings.shape());
}

Tensor apply_mask(const Tensor& embeddings, const std::vector<MaskPlan>& plans) {
  if (embeddings.dim() != 3) throw Error(ErrorCode::ShapeMismatch, "apply_mask expects (B, L, D)");
  const std::size_t batch = embeddings.size(0);
  const std::size_t len = embeddings.size(1);
  if (plans.size() != batch) throw Error(ErrorCode::PlanMismatch, "one mask plan per sequence required");
  std::vector<double> keep(batch * len, 1.0);
  for (std::size_t b = 0; b < batch; ++b) {
    if (plans[b].length != len) {
      throw Error(ErrorCode::PlanMismatch, "plan length " + std::to_string(plans[b].length) + " vs sequence length " +
                                               std::to_string(len));
    }
    for (auto i : plans[b].masked) {
      if (i >= len) throw Error(ErrorCode::PlanMismatch, "masked index out of range");
      keep[b * len + i] = 0.0;
    }
  }
  return mul(embeddings, Tensor::from_values({batch, len, 1}, std::move(keep)));
}

Tensor band_projector(std::size_t n, std::size_t lo_bin, std::size_t hi_bin) {
  // P[i][j] = (1/n) sum_k c_k cos(2 pi k (i - j) / n); c_k = 1 at DC/Nyquist, 2 elsewhere.
  std::vector<double> kernel(n, 0.0);
  const std::size_t top = std::min(hi_bin, n / 2);
  for (std::size_t lag = 0; lag < n; ++lag) {
    double acc = 0.0;
    for (std::size_t k = lo_bin; k <= top; ++k) {
      const bool single = k == 0 || (n % 2 == 0 && k == n / 2);
      const std::size_t phase = (k * lag) % n;
      acc += (single ? 1.0 : 2.0) * std::cos(2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(n));
    }
    kernel[lag] = acc / static_cast<double>(n);
  }
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = kernel[(i + n - j) % n];
  }
  return Tensor::from_values({n, n}, std::move(m));
}

LossTerms pretrain_loss(const Tensor& tokens, const Tensor& recon, const std::vector<MaskPlan>& plans,
                        const PretrainConfig& cfg, const Tensor& projector) {
  if (tokens.shape() != recon.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "tokens " + to_string(tokens.shape()) + " vs recon " + to_string(recon.shape()));
  }
  if (tokens.dim() == 2) {
    const Shape s3{1, tokens.size(0), tokens.size(1)};
    return pretrain_loss(reshape(tokens, s3), reshape(recon, s3), plans, cfg, projector);
  }
  if (tokens.dim() != 3) throw Error(ErrorCode::ShapeMismatch, "pretrain_loss expects (L, l) or (B, L, l)");
  const std::size_t batch = tokens.size(0);
  const std::size_t len = tokens.size(1);
  const std::size_t tlen = tokens.size(2);
  if (plans.size() != batch) throw Error(ErrorCode::PlanMismatch, "one mask plan per sequence required");
  if (projector.shape() != Shape{tlen, tlen}) throw Error(ErrorCode::ShapeMismatch, "projector size");

  std::vector<double> w_masked(batch * len, 0.0), w_unmasked(batch * len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    if (plans[b].length != len) throw Error(ErrorCode::PlanMismatch, "plan length differs from sequence length");
    const std::size_t n_masked = plans[b].masked.size();
    const std::size_t n_kept = len - n_masked;
    for (std::size_t i = 0; i < len; ++i) {
      if (plans[b].is_masked(i)) {
        w_masked[b * len + i] = 1.0 / static_cast<double>(n_masked * batch);
      } else {
        w_unmasked[b * len + i] = 1.0 / static_cast<double>(n_kept * batch);
      }
    }
  }

  const Tensor per_token = mean_last(huber_elements(recon, tokens, cfg.huber_delta));  // (B, L)
  LossTerms out;
  out.masked = sum(mul(per_token, Tensor::from_values({batch, len}, std::move(w_masked))));
  out.unmasked = sum(mul(per_token, Tensor::from_values({batch, len}, std::move(w_unmasked))));
  const Tensor band_err = matmul(sub(tokens, recon), projector);
  out.spectral = scale(sum(square(band_err)), 1.0 / static_cast<double>(batch * len));
  out.total = add(add(scale(out.masked, cfg.lambda_masked), scale(out.unmasked, cfg.lambda_unmasked)),
                  scale(out.spectral, cfg.lambda_spectral));
  return out;
}

LossTerms pretrain_loss(const Tensor& tokens, const Tensor& recon, const MaskPlan& plan, const PretrainConfig& cfg) {
  return pretrain_loss(tokens, recon, std::vector<MaskPlan>{plan}, cfg,
                       band_projector(tokens.shape().back(), cfg.band_lo_bin, cfg.band_hi_bin));
}

Pretrainer::Pretrainer(const EncoderConfig& encoder_cfg, const PretrainConfig& cfg, std::int64_t total_steps)
    : cfg_(cfg),
      total_steps_(total_steps),
      encoder_(encoder_cfg, mix_seed(cfg.seed, kEncoderStream)),
      decoder_(make_decoder(encoder_cfg, cfg.seed)) {
  cfg_.validate();
  if (total_steps_ < 1) throw Error(ErrorCode::InvalidSpec, "total_steps must be >= 1");
  if (cfg_.min_seq_len > encoder_cfg.max_seq_len) {
    throw Error(ErrorCode::InvalidSpec, "min_seq_len exceeds the encoder's max_seq_len");
  }
  all_params_.extend(encoder_.parameters(), "encoder.");
  all_params_.extend(decoder_.parameters(), "decoder.");
  opt_ = AdamWState::zeros_like(all_params_);
  projector_ = band_projector(encoder_cfg.token_len, cfg_.band_lo_bin, cfg_.band_hi_bin);
}

std::int64_t Pretrainer::derive_total_steps(const PretrainConfig& cfg, const TokenStream& corpus) {
  if (cfg.steps > 0) return cfg.steps;
  const double mean_len = 0.5 * static_cast<double>(cfg.min_seq_len + cfg.max_seq_len);
  const double per_epoch = static_cast<double>(corpus.size()) / (static_cast<double>(cfg.batch_size) * mean_len);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(per_epoch)) * static_cast<std::int64_t>(cfg.epochs));
}

LossRecord Pretrainer::step(const TokenStream& corpus) {
  const std::int64_t k = opt_.step;
  const EncoderConfig& ec = encoder_.config();
  if (corpus.token_len() != ec.token_len) {
    throw Error(ErrorCode::ShapeMismatch, "corpus tokens have " + std::to_string(corpus.token_len()) +
                                              " samples, encoder expects " + std::to_string(ec.token_len));
  }
  Rng rng(mix_seed(mix_seed(cfg_.seed, kBatchStream), static_cast<std::uint64_t>(k)));
  const std::size_t max_len = std::min(cfg_.max_seq_len, ec.max_seq_len);
  const std::size_t seq_len = cfg_.min_seq_len + static_cast<std::size_t>(rng.index(max_len - cfg_.min_seq_len + 1));
  const auto starts = sample_starts(corpus, seq_len, cfg_.batch_size, rng.next());
  const std::size_t batch = starts.size();

  std::vector<double> data;
  data.reserve(batch * seq_len * ec.token_len);
  std::vector<MaskPlan> plans;
  for (std::size_t s : starts) {
    const auto toks = corpus.tokens(s, seq_len);
    data.insert(data.end(), toks.begin(), toks.end());
    plans.push_back(MaskPlan::sample(seq_len, cfg_.mask_ratio, rng));
  }
  const Tensor tokens = Tensor::from_values({batch, seq_len, ec.token_len}, std::move(data));

  const double lr = cosine_lr(k, total_steps_ - 1, cfg_.lr_max, cfg_.lr_min);
  all_params_.zero_grad();
  const Tensor embeddings = encoder_.embed_tokens(encoder_.temporal_encode(tokens));
  const Tensor recon = decoder_.decode(encoder_.global_encode(apply_mask(embeddings, plans)));
  const LossTerms loss = pretrain_loss(tokens, recon, plans, cfg_, projector_);
  if (!std::isfinite(loss.total.item())) {
    throw Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(k) + ": total=" + format_double(loss.total.item()) +
                                              " masked=" + format_double(loss.masked.item()) +
                                              " unmasked=" + format_double(loss.unmasked.item()) +
                                              " bg=" + format_double(loss.spectral.item()));
  }
  loss.total.backward();
  adamw_step(all_params_, opt_, lr, cfg_.adam);

  LossRecord rec{k, lr, loss.total.item(), loss.masked.item(), loss.unmasked.item(), loss.spectral.item()};
  history_.push_back(rec);
  return rec;
}

void Pretrainer::train(const TokenStream& corpus, std::optional<std::int64_t> until_step,
                       const std::function<void(const Pretrainer&, const LossRecord&)>& on_step) {
  const std::int64_t stop = std::min(until_step.value_or(total_steps_), total_steps_);
  while (opt_.step < stop) {
    const LossRecord rec = step(corpus);
    if (on_step) on_step(*this, rec);
  }
}

LossTerms Pretrainer::evaluate(const std::vector<std::vector<double>>& sequences, std::size_t seq_len,
                               const std::vector<MaskPlan>& plans) const {
  NoGradGuard no_grad;
  const std::size_t tl = encoder_.config().token_len;
  std::vector<double> data;
  for (const auto& s : sequences) {
    if (s.size() != seq_len * tl) throw Error(ErrorCode::ShapeMismatch, "sequence size");
    data.insert(data.end(), s.begin(), s.end());
  }
  const Tensor tokens = Tensor::from_values({sequences.size(), seq_len, tl}, std::move(data));
  const Tensor embeddings = encoder_.embed_tokens(encoder_.temporal_encode(tokens));
  const Tensor recon = decoder_.decode(encoder_.global_encode(apply_mask(embeddings, plans)));
  return pretrain_loss(tokens, recon, plans, cfg_, projector_);
}

Checkpoint Pretrainer::to_checkpoint() const {
  Checkpoint ckpt;
  encoder_.config().write(ckpt.meta);
  cfg_.write(ckpt.meta);
  ckpt.meta.set("train.total_steps", std::to_string(total_steps_));
  ckpt.meta.set("train.step", std::to_string(opt_.step));
  export_parameters(all_params_, ckpt);
  for (std::size_t i = 0; i < all_params_.size(); ++i) {
    const auto& p = all_params_.items()[i];
    ckpt.arrays.push_back({"adam.m." + p.name, p.tensor.shape(), opt_.m[i]});
    ckpt.arrays.push_back({"adam.v." + p.name, p.tensor.shape(), opt_.v[i]});
  }
  std::vector<double> hist;
  for (const auto& r : history_) {
    hist.insert(hist.end(), {static_cast<double>(r.step), r.lr, r.total, r.masked, r.unmasked, r.spectral});
  }
  ckpt.arrays.push_back({"train.history", {history_.size(), 6}, std::move(hist)});
  return ckpt;
}

Pretrainer Pretrainer::from_checkpoint(const Checkpoint& ckpt) {
  const EncoderConfig ec = EncoderConfig::read(ckpt.meta);
  const PretrainConfig pc = PretrainConfig::read(ckpt.meta);
  Pretrainer t(ec, pc, ckpt.meta.require_int("train.total_steps"));
  import_parameters(t.all_params_, ckpt);
  for (std::size_t i = 0; i < t.all_params_.size(); ++i) {
    const auto& name = t.all_params_.items()[i].name;
    t.opt_.m[i] = ckpt.require("adam.m." + name).values;
    t.opt_.v[i] = ckpt.require("adam.v." + name).values;
  }
  t.opt_.step = ckpt.meta.require_int("train.step");
  const auto& hist = ckpt.require("train.history");
  for (std::size_t r = 0; r + 6 <= hist.values.size(); r += 6) {
    const auto* v = hist.values.data() + r;
    t.history_.push_back({static_cast<std::int64_t>(v[0]), v[1], v[2], v[3], v[4], v[5]});
  }
  return t;
}

Encoder load_encoder(const Checkpoint& ckpt) {
  Encoder enc(EncoderConfig::read(ckpt.meta), 0);
  import_parameters(enc.parameters(), ckpt, "encoder.");
  return enc;
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out << "step,lr,total,l_masked,l_unmasked,l_bg\n";
  for (const auto& r : history) {
    out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.total) << ',' << format_double(r.masked)
        << ',' << format_double(r.unmasked) << ',' << format_double(r.spectral) << '\n';
  }
  return out.str();
}

}  // namespace singlem
