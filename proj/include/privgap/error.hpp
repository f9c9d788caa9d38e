#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace privgap {

enum class ErrorCode {
  // repstore
  IoFailure,
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  TrailingData,
  NonFinite,
  RowCountMismatch,
  DuplicateQid,
  DuplicateLayer,
  DatasetMismatch,
  MissingLayerFile,
  MissingLabel,
  NonBinaryLabel,
  ConflictingLabel,
  ParseError,
  // probes
  EmptyInput,
  SingleClass,
  TooFewExamples,
  DimMismatch,
  // crossval
  TooFewPerClass,
  FoldClassCollapse,
  // metrics
  LengthMismatch,
  TooFewFolds,
  EmptyExternalSet,
  DegenerateBaseline,
  // experiments
  MissingLayer,
  SubsetTooSmall,
  EmptyReport,
  // synth
  InvalidSpec,
  Unreachable,
  // generic precondition failure
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace privgap
