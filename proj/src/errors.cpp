#include "crossclr/errors.hpp"

namespace crossclr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVectorRow: return "ZeroVectorRow";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::DegenerateSelfExclusion: return "DegenerateSelfExclusion";
    case ErrorKind::DegenerateScores: return "DegenerateScores";
    case ErrorKind::WeightOverflow: return "WeightOverflow";
    case ErrorKind::BatchLargerThanCapacity: return "BatchLargerThanCapacity";
    case ErrorKind::EmptyQueue: return "EmptyQueue";
    case ErrorKind::QueueContractViolation: return "QueueContractViolation";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorKind::KExceedsInfluentialSet: return "KExceedsInfluentialSet";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::PathError: return "PathError";
    case ErrorKind::ConfigParseError: return "ConfigParseError";
    case ErrorKind::UnknownCommand: return "UnknownCommand";
  }
  return "Unknown";
}

}  // namespace crossclr
