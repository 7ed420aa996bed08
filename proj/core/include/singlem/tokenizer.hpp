// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace singlem {

struct TokenizerParams {
  std::size_t token_len = 128;  // one second at 128 Hz
  std::size_t overlap = 32;

  std::size_t stride() const { return token_len - overlap; }
  void validate() const;
};

/// Number of full tokens in a signal of `length` samples (0 when too short).
std::size_t token_count(std::size_t length, const TokenizerParams& params);

/// Token i covers x[i*stride, i*stride + token_len). Trailing samples that
/// do not fill a whole token are dropped. Returns row-major (L x token_len).
/// Throws SignalTooShort when len(x) < token_len.
std::vector<double> tokenize(std::span<const double> x, const TokenizerParams& params);

/// Tokens from several channel segments laid end to end. An end-of-channel
/// boundary is recorded after the last token of every segment, so sampled
/// sequences can never mix two channels.
class TokenStream {
 public:
  TokenStream() = default;
  explicit TokenStream(std::size_t token_len) : token_len_(token_len) {}

  std::size_t token_len() const { return token_len_; }
  std::size_t size() const { return token_len_ == 0 ? 0 : data_.size() / token_len_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> token(std::size_t i) const;
  /// Contiguous tokens [start, start + count), row-major.
  std::span<const double> tokens(std::size_t start, std::size_t count) const;

  /// Sorted indices i such that an end-of-channel marker follows token i.
  const std::vector<std::size_t>& boundaries() const { return boundaries_; }
  /// Segments dropped for being shorter than one token.
  std::size_t skipped_segments() const { return skipped_; }

  /// Appends another stream; its boundaries are shifted accordingly.
  void append(const TokenStream& other);

 private:
  friend TokenStream build_stream(std::span<const std::vector<double>> segments, const TokenizerParams& params);

  std::size_t token_len_ = 0;
  std::vector<double> data_;
  std::vector<std::size_t> boundaries_;
  std::size_t skipped_ = 0;
};

TokenStream build_stream(std::span<const std::vector<double>> segments, const TokenizerParams& params);

/// Start indices of every window of `seq_len` tokens that does not cross an
/// end-of-channel boundary.
std::vector<std::size_t> valid_starts(const TokenStream& stream, std::size_t seq_len);

/// Uniform draw of `count` window starts (without replacement when enough
/// windows exist). Throws NoValidWindow when no window fits.
std::vector<std::size_t> sample_starts(const TokenStream& stream, std::size_t seq_len, std::size_t count,
                                       std::uint64_t seed);

/// As sample_starts, returning copies of the sampled token sequences
/// (each seq_len x token_len, row-major).
std::vector<std::vector<double>> sample_sequences(const TokenStream& stream, std::size_t seq_len, std::size_t count,
                                                  std::uint64_t seed);

}  // namespace singlem
