#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qvlm {

enum class ErrorCode {
  Domain,
  Structural,
  Config,
  Io,
  NotFound,
  UnknownTopic,
  // plan language
  Syntax,
  NoSteps,
  UnknownStepKind,
  UnboundReference,
  TypeMismatch,
  MissingField,
  DuplicateBinding,
  // plan execution
  Backend,
  DivisionByZero,
  EmptyAverage,
  EmptyReferences,
  // completion service
  Transport,
  NoCannedResponse,
  UnparseableGeneration,
  // datasets and reports
  Validation,
  OrphanPrediction,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace qvlm
