#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace diagnosys {

enum class ErrorCode {
  missing_section,
  bad_weight,
  duplicate_symptom,
  malformed_document,
  empty_knowledge_base,
  duplicate_disease,
  io_error,
  dimension_mismatch,
  bad_chunk_params,
  empty_index,
  remote_unavailable,
  no_hypotheses,
  non_finite_value,
  empty_evidence,
  missing_slot,
  provider_unavailable,
  invalid_config,
  empty_results,
  degenerate_training_set,
  empty_grid,
  unknown_disease,
  duplicate_key,
  stale_question,
  wrong_phase,
  unknown_test,
  unknown_session,
  capacity_exceeded,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::missing_section: return "MissingSection";
    case ErrorCode::bad_weight: return "BadWeight";
    case ErrorCode::duplicate_symptom: return "DuplicateSymptom";
    case ErrorCode::malformed_document: return "MalformedDocument";
    case ErrorCode::empty_knowledge_base: return "EmptyKnowledgeBase";
    case ErrorCode::duplicate_disease: return "DuplicateDisease";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::bad_chunk_params: return "BadChunkParams";
    case ErrorCode::empty_index: return "EmptyIndex";
    case ErrorCode::remote_unavailable: return "RemoteUnavailable";
    case ErrorCode::no_hypotheses: return "NoHypotheses";
    case ErrorCode::non_finite_value: return "NonFiniteValue";
    case ErrorCode::empty_evidence: return "EmptyEvidence";
    case ErrorCode::missing_slot: return "MissingSlot";
    case ErrorCode::provider_unavailable: return "ProviderUnavailable";
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::empty_results: return "EmptyResults";
    case ErrorCode::degenerate_training_set: return "DegenerateTrainingSet";
    case ErrorCode::empty_grid: return "EmptyGrid";
    case ErrorCode::unknown_disease: return "UnknownDisease";
    case ErrorCode::duplicate_key: return "DuplicateKey";
    case ErrorCode::stale_question: return "StaleQuestion";
    case ErrorCode::wrong_phase: return "WrongPhase";
    case ErrorCode::unknown_test: return "UnknownTest";
    case ErrorCode::unknown_session: return "UnknownSession";
    case ErrorCode::capacity_exceeded: return "CapacityExceeded";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code plus
/// the offending item (section name, disease name, slot, ...) as detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail)
      : std::runtime_error(std::string(to_string(code)) + "(" + detail + ")"),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace diagnosys
