#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ace {

enum class ErrorCode {
  EmptyMask,
  NonBinaryElement,
  LengthMismatch,
  LTooLarge,
  IndexOutOfRange,
  RetryExhausted,
  InvalidGamma,
  InvalidLearningRate,
  AllZeroMask,
  NegativeNoise,
  InvalidDataset,
  UnknownMask,
  ConfigInvalid,
  MissingPredictions,
  EmptyLog,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NonBinaryElement: return "NonBinaryElement";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LTooLarge: return "LTooLarge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::RetryExhausted: return "RetryExhausted";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::InvalidLearningRate: return "InvalidLearningRate";
    case ErrorCode::AllZeroMask: return "AllZeroMask";
    case ErrorCode::NegativeNoise: return "NegativeNoise";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::UnknownMask: return "UnknownMask";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingPredictions: return "MissingPredictions";
    case ErrorCode::EmptyLog: return "EmptyLog";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ace
