#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crossclr {

enum class ErrorKind {
  ZeroVectorRow,
  DimensionMismatch,
  InvalidShape,
  NonFiniteValue,
  NonPositiveTemperature,
  DegenerateSelfExclusion,
  DegenerateScores,
  WeightOverflow,
  BatchLargerThanCapacity,
  EmptyQueue,
  QueueContractViolation,
  BatchTooSmall,
  InsufficientNegatives,
  KExceedsInfluentialSet,
  NonFiniteLoss,
  InvalidArgument,
  EmptyDataset,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ManifestMismatch,
  PathError,
  ConfigParseError,
  UnknownCommand,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace crossclr
