// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace singlem {

/// Stable error codes. The string form (see to_string) is what the CLI prints,
/// so existing names must never be renamed.
enum class ErrorCode {
  MalformedHeader,
  PayloadSizeMismatch,
  NonFiniteSample,
  IoFailure,
  InvalidSpec,
  InvalidBand,
  SignalTooShort,
  EmptySignal,
  AmplitudeOutOfRange,
  WrongLength,
  NoValidWindow,
  ShapeMismatch,
  EvenKernel,
  HeadDivisibility,
  StateShapeMismatch,
  EmptySequence,
  SequenceTooLong,
  PlanMismatch,
  NonFiniteLoss,
  IntegrityError,
  ConfigMismatch,
  TooFewBins,
  SingleClass,
  NoConvergence,
  LengthMismatch,
  EmptyInput,
  TooFewSubjects,
  UsageError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace singlem
