#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace telecouple {

enum class ErrorCode {
  // input / schema family
  FileNotFound,
  SchemaError,
  DuplicateId,
  DuplicateKey,
  CoordinateOutOfRange,
  UnknownLocation,
  NonFiniteValue,
  MissingValue,
  NegativeWeight,
  InvalidConfig,
  InvalidArgument,
  // geometry / aoe
  DegenerateExtent,
  NoSamplesForDate,
  UnknownSender,
  InsufficientPositiveScores,
  NegativeScore,
  // shift-share
  BothZero,
  ZeroBaseExports,
  MissingYear,
  ZeroPopulation,
  ZeroDenominator,
  InvalidReps,
  OutOfRangeP,
  // econometrics
  NonConvergence,
  RankDeficient,
  EmptyPanel,
  WeakRank,
  SingleCluster,
  MissingBin,
  ZeroVariance,
  // accounting
  MissingPopulation,
  ZeroExports,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace telecouple
