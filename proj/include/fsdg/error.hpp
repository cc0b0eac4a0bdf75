#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsdg {

enum class ErrorCode {
  // hierarchy
  MissingParent,
  CycleOrLevelMismatch,
  DuplicateClassId,
  OutOfRangeClass,
  InvalidLevel,
  NotADistribution,
  // featurespace / losses
  DimensionMismatch,
  EmptySegment,
  ZeroVector,
  DegenerateBandwidth,
  BatchMismatch,
  EmptyGroup,
  TooFewClasses,
  // objectives
  SingleLevelHierarchy,
  LabelOutOfRange,
  MissingComponent,
  // network
  ShapeMismatch,
  UnavailableBranch,
  // trainer
  NonFiniteLoss,
  EmptyDataset,
  ClassCountMismatch,
  EmptySearchSpace,
  NonFiniteGradient,
  // explain
  UntrainedModel,
  TooFewPairs,
  // synthdata
  InconsistentBranching,
  // plumbing
  ConfigError,
  DataError,
  IoError,
};

std::string_view error_name(ErrorCode code);

/// Process exit status for a module error: 2 config, 3 data, 4 numeric.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fsdg
