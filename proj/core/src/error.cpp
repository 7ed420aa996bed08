// SPDX-License-Identifier: Apache-2.0
#include "singlem/error.hpp"

namespace singlem {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::PayloadSizeMismatch: return "PayloadSizeMismatch";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::AmplitudeOutOfRange: return "AmplitudeOutOfRange";
    case ErrorCode::WrongLength: return "WrongLength";
    case ErrorCode::NoValidWindow: return "NoValidWindow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EvenKernel: return "EvenKernel";
    case ErrorCode::HeadDivisibility: return "HeadDivisibility";
    case ErrorCode::StateShapeMismatch: return "StateShapeMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::TooFewBins: return "TooFewBins";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace singlem
