// SPDX-License-Identifier: Apache-2.0
#include "singlem/tokenizer.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "singlem/error.hpp"
#include "singlem/rng.hpp"

namespace singlem {

void TokenizerParams::validate() const {
  if (token_len == 0 || overlap >= token_len) {
    throw Error(ErrorCode::InvalidSpec, "tokenizer needs 0 <= overlap < token_len");
  }
}

std::size_t token_count(std::size_t length, const TokenizerParams& params) {
  params.validate();
  if (length < params.token_len) return 0;
  return (length - params.token_len) / params.stride() + 1;
}

std::vector<double> tokenize(std::span<const double> x, const TokenizerParams& params) {
  params.validate();
  if (x.size() < params.token_len) {
    throw Error(ErrorCode::SignalTooShort, "need at least " + std::to_string(params.token_len) +
                                               " samples, got " + std::to_string(x.size()));
  }
  const std::size_t count = token_count(x.size(), params);
  std::vector<double> out;
  out.reserve(count * params.token_len);
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = x.begin() + static_cast<std::ptrdiff_t>(i * params.stride());
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(params.token_len));
  }
  return out;
}

std::span<const double> TokenStream::token(std::size_t i) const { return tokens(i, 1); }

std::span<const double> TokenStream::tokens(std::size_t start, std::size_t count) const {
  if (start + count > size()) throw Error(ErrorCode::ShapeMismatch, "token range out of bounds");
  return std::span<const double>(data_).subspan(start * token_len_, count * token_len_);
}

void TokenStream::append(const TokenStream& other) {
  if (other.empty()) {
    skipped_ += other.skipped_;
    return;
  }
  if (token_len_ == 0) token_len_ = other.token_len_;
  if (other.token_len_ != token_len_) throw Error(ErrorCode::ShapeMismatch, "token lengths differ");
  const std::size_t offset = size();
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  for (auto b : other.boundaries_) boundaries_.push_back(b + offset);
  skipped_ += other.skipped_;
}

TokenStream build_stream(std::span<const std::vector<double>> segments, const TokenizerParams& params) {
  params.validate();
  TokenStream stream(params.token_len);
  for (const auto& seg : segments) {
    if (seg.size() < params.token_len) {
      ++stream.skipped_;
      continue;
    }
    const auto toks = tokenize(seg, params);
    stream.data_.insert(stream.data_.end(), toks.begin(), toks.end());
    stream.boundaries_.push_back(stream.size() - 1);
  }
  return stream;
}

std::vector<std::size_t> valid_starts(const TokenStream& stream, std::size_t seq_len) {
  if (seq_len == 0) throw Error(ErrorCode::InvalidSpec, "seq_len must be >= 1");
  std::vector<std::size_t> starts;
  const auto& bounds = stream.boundaries();
  std::size_t channel_start = 0;
  for (std::size_t b : bounds) {
    // tokens [channel_start, b] form one channel
    const std::size_t len = b + 1 - channel_start;
    if (len >= seq_len) {
      for (std::size_t s = channel_start; s + seq_len <= b + 1; ++s) starts.push_back(s);
    }
    channel_start = b + 1;
  }
  // tokens after the last marker (streams assembled without one) count as a channel
  if (channel_start < stream.size()) {
    for (std::size_t s = channel_start; s + seq_len <= stream.size(); ++s) starts.push_back(s);
  }
  return starts;
}

std::vector<std::size_t> sample_starts(const TokenStream& stream, std::size_t seq_len, std::size_t count,
                                       std::uint64_t seed) {
  auto starts = valid_starts(stream, seq_len);
  if (starts.empty()) {
    throw Error(ErrorCode::NoValidWindow, "no channel holds " + std::to_string(seq_len) + " consecutive tokens");
  }
  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(count);
  if (count <= starts.size()) {
    // partial Fisher-Yates
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.index(starts.size() - i));
      std::swap(starts[i], starts[j]);
      picked.push_back(starts[i]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) picked.push_back(starts[rng.index(starts.size())]);
  }
  return picked;
}

std::vector<std::vector<double>> sample_sequences(const TokenStream& stream, std::size_t seq_len, std::size_t count,
                                                  std::uint64_t seed) {
  std::vector<std::vector<double>> out;
  for (std::size_t s : sample_starts(stream, seq_len, count, seed)) {
    const auto toks = stream.tokens(s, seq_len);
    out.emplace_back(toks.begin(), toks.end());
  }
  return out;
}

}  // namespace singlem
