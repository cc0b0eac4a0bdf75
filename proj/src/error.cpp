#include "fsdg/error.hpp"

namespace fsdg {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingParent: return "MissingParent";
    case ErrorCode::CycleOrLevelMismatch: return "CycleOrLevelMismatch";
    case ErrorCode::DuplicateClassId: return "DuplicateClassId";
    case ErrorCode::OutOfRangeClass: return "OutOfRangeClass";
    case ErrorCode::InvalidLevel: return "InvalidLevel";
    case ErrorCode::NotADistribution: return "NotADistribution";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySegment: return "EmptySegment";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DegenerateBandwidth: return "DegenerateBandwidth";
    case ErrorCode::BatchMismatch: return "BatchMismatch";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::SingleLevelHierarchy: return "SingleLevelHierarchy";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::MissingComponent: return "MissingComponent";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnavailableBranch: return "UnavailableBranch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ClassCountMismatch: return "ClassCountMismatch";
    case ErrorCode::EmptySearchSpace: return "EmptySearchSpace";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::InconsistentBranching: return "InconsistentBranching";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidLevel:
    case ErrorCode::MissingComponent:
    case ErrorCode::EmptySearchSpace:
    case ErrorCode::SingleLevelHierarchy:
    case ErrorCode::InconsistentBranching:
      return 2;
    case ErrorCode::ZeroVector:
    case ErrorCode::DegenerateBandwidth:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NotADistribution:
      return 4;
    default:
      return 3;
  }
}

}  // namespace fsdg
