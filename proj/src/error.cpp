#include "qvlm/error.hpp"

namespace qvlm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Structural: return "structural";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::UnknownTopic: return "unknown_topic";
    case ErrorCode::Syntax: return "syntax";
    case ErrorCode::NoSteps: return "no_steps";
    case ErrorCode::UnknownStepKind: return "unknown_step_kind";
    case ErrorCode::UnboundReference: return "unbound_reference";
    case ErrorCode::TypeMismatch: return "type_mismatch";
    case ErrorCode::MissingField: return "missing_field";
    case ErrorCode::DuplicateBinding: return "duplicate_binding";
    case ErrorCode::Backend: return "backend";
    case ErrorCode::DivisionByZero: return "division_by_zero";
    case ErrorCode::EmptyAverage: return "empty_average";
    case ErrorCode::EmptyReferences: return "empty_references";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::NoCannedResponse: return "no_canned_response";
    case ErrorCode::UnparseableGeneration: return "unparseable_generation";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::OrphanPrediction: return "orphan_prediction";
  }
  return "unknown";
}

}  // namespace qvlm
