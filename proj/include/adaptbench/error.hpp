#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace adaptbench {

// Process exit codes used by the CLI. Every Error maps onto one of these.
enum class ErrorCategory { Config = 2, Data = 3, IO = 4, Internal = 5 };

enum class ErrorCode {
  // chat_parser
  MalformedHeader,
  UnterminatedTier,
  // dataset_splitter
  EmptySpeakerList,
  TooFewUtterances,
  MissingBlockLabel,
  EmptyBlock2,
  InvalidFraction,
  // manifest_io
  DuplicateUttId,
  InvalidEntry,
  MalformedLine,
  DuplicateHypothesis,
  // scoring
  EmptyReferenceCorpus,
  SpeakerWithNoReference,
  // experiment_matrix
  MissingSICheckpointRef,
  SpeakerSetMismatch,
  // config / cli
  MissingKey,
  UnknownKey,
  InvalidValue,
  // io
  FileNotFound,
  ReadFailed,
  WriteFailed,
  // broken invariant inside the toolkit itself
  InvariantViolation,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnterminatedTier: return "UnterminatedTier";
    case ErrorCode::EmptySpeakerList: return "EmptySpeakerList";
    case ErrorCode::TooFewUtterances: return "TooFewUtterances";
    case ErrorCode::MissingBlockLabel: return "MissingBlockLabel";
    case ErrorCode::EmptyBlock2: return "EmptyBlock2";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::DuplicateUttId: return "DuplicateUttId";
    case ErrorCode::InvalidEntry: return "InvalidEntry";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::DuplicateHypothesis: return "DuplicateHypothesis";
    case ErrorCode::EmptyReferenceCorpus: return "EmptyReferenceCorpus";
    case ErrorCode::SpeakerWithNoReference: return "SpeakerWithNoReference";
    case ErrorCode::MissingSICheckpointRef: return "MissingSICheckpointRef";
    case ErrorCode::SpeakerSetMismatch: return "SpeakerSetMismatch";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ReadFailed: return "ReadFailed";
    case ErrorCode::WriteFailed: return "WriteFailed";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingKey:
    case ErrorCode::UnknownKey:
    case ErrorCode::InvalidValue:
    case ErrorCode::InvalidFraction:
      return ErrorCategory::Config;
    case ErrorCode::FileNotFound:
    case ErrorCode::ReadFailed:
    case ErrorCode::WriteFailed:
      return ErrorCategory::IO;
    case ErrorCode::InvariantViolation:
      return ErrorCategory::Internal;
    default:
      return ErrorCategory::Data;
  }
}

/// The single exception type thrown by the toolkit. `line()` is 1-based and
/// zero when the error is not tied to a line of input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(message), code_(code), line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  std::size_t line() const noexcept { return line_; }
  int exit_code() const noexcept { return static_cast<int>(category()); }

 private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace adaptbench
