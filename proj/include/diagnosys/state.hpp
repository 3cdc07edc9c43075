#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diagnosys/error.hpp"
#include "diagnosys/kb.hpp"

namespace diagnosys {

struct EngineConfig {
  int min_questions = 10;
  int min_symptoms = 8;
  int max_questions = 20;
  double sim_threshold = 0.55;
  std::optional<double> confidence_early_stop;
  double global_weight = 0.7;
  double local_weight = 0.3;
  int top_k_focus = 3;

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::invalid_config, m); };
    if (std::abs(global_weight + local_weight - 1.0) > 1e-9) bad("global_weight + local_weight must be 1");
    if (global_weight < 0.0 || local_weight < 0.0) bad("scoring weights must be non-negative");
    if (!(sim_threshold > 0.0 && sim_threshold < 1.0)) bad("sim_threshold must lie in (0,1)");
    if (min_symptoms < 1) bad("min_symptoms must be >= 1");
    if (min_questions < 0) bad("min_questions must be >= 0");
    if (max_questions < min_questions) bad("max_questions must be >= min_questions");
    if (top_k_focus < 1) bad("top_k_focus must be >= 1");
    if (confidence_early_stop && !(*confidence_early_stop > 0.0 && *confidence_early_stop < 1.0))
      bad("confidence_early_stop must lie in (0,1)");
  }
};

enum class MatchKind { exact, semantic, none };

constexpr std::string_view to_string(MatchKind k) {
  switch (k) {
    case MatchKind::exact: return "exact";
    case MatchKind::semantic: return "semantic";
    case MatchKind::none: return "none";
  }
  return "";
}

inline constexpr double kExactStrength = 1.0;
inline constexpr double kSemanticStrength = 0.6;
inline constexpr double kDenialFactor = 0.8;
inline constexpr double kTestSupportBoost = 0.5;

struct MatchResult {
  std::string user_phrase;
  std::string disease;  // empty for kind == none
  std::string canonical;
  double strength = 0.0;
  double similarity = 0.0;
  MatchKind kind = MatchKind::none;
};

enum class EvidenceSource { volunteered, answered_yes };

constexpr std::string_view to_string(EvidenceSource s) {
  return s == EvidenceSource::volunteered ? "volunteered" : "answered-yes";
}

struct ConfirmedSymptom {
  std::string canonical;
  double strength = kExactStrength;
  EvidenceSource source = EvidenceSource::volunteered;
  std::string phrase;  // what the patient said, or the canonical for yes-answers
};

struct DeniedSymptom {
  std::string canonical;
  std::map<std::string, double> penalties;  // disease -> 0.8 * w_{s,d}
};

struct Hypothesis {
  std::string disease;
  double score = 0.0;         // accumulated base score
  int matched = 0;            // confirmed symptoms attributed to this disease
  double penalty = 0.0;       // summed denial penalties
  double confidence = 0.0;    // per-disease confidence, capped at 0.95
  double global_similarity = 0.0;
  double rank_score = 0.0;    // hybrid global/local score
  bool eliminated = false;
  std::string elimination_reason;
};

enum class Phase { symptom_elicitation, test_evaluation, concluded };

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::symptom_elicitation: return "symptom_elicitation";
    case Phase::test_evaluation: return "test_evaluation";
    case Phase::concluded: return "concluded";
  }
  return "";
}

enum class Answer { yes, no, unsure };

constexpr std::string_view to_string(Answer a) {
  switch (a) {
    case Answer::yes: return "yes";
    case Answer::no: return "no";
    case Answer::unsure: return "unsure";
  }
  return "";
}

inline std::optional<Answer> parse_answer(std::string_view s) {
  auto t = to_lower(trim(s));
  if (t == "yes" || t == "y") return Answer::yes;
  if (t == "no" || t == "n") return Answer::no;
  if (t == "unsure" || t == "u" || t == "not sure" || t == "?") return Answer::unsure;
  return std::nullopt;
}

struct QuestionRecord {
  std::string id;
  std::string canonical;
  Answer answer = Answer::unsure;
};

enum class Verdict { supports, refutes, skipped };

constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::supports: return "supports";
    case Verdict::refutes: return "refutes";
    case Verdict::skipped: return "skipped";
  }
  return "";
}

struct TestOutcome {
  std::string disease;
  std::string test_id;
  std::optional<double> reported_value;
  Verdict verdict = Verdict::skipped;
  bool decisive_elimination = false;
};

struct PlannedTest {
  std::string disease;
  TestCriterion criterion;
};

struct RiskConfirmation {
  std::string disease;
  RiskFactor factor;
};

enum class EventKind {
  symptom_confirmed,
  symptom_denied,
  symptom_unsure,
  contradiction,
  phrase_rejected,
  phrase_dropped,
  phase_change,
  test_result,
  elimination,
  risk_answer,
  report,
};

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::symptom_confirmed: return "symptom_confirmed";
    case EventKind::symptom_denied: return "symptom_denied";
    case EventKind::symptom_unsure: return "symptom_unsure";
    case EventKind::contradiction: return "contradiction";
    case EventKind::phrase_rejected: return "phrase_rejected";
    case EventKind::phrase_dropped: return "phrase_dropped";
    case EventKind::phase_change: return "phase_change";
    case EventKind::test_result: return "test_result";
    case EventKind::elimination: return "elimination";
    case EventKind::risk_answer: return "risk_answer";
    case EventKind::report: return "report";
  }
  return "";
}

/// One transcript entry. Field use depends on kind: symptom events fill
/// `canonical` (and `value` = strength for confirmations); test events fill
/// `disease`, `item` = test id, `value` = reported value, `detail` = verdict;
/// risk answers fill `disease`, `item` = description, `value` = weight,
/// `detail` = answer.
struct Event {
  EventKind kind;
  std::string canonical;
  std::string disease;
  std::string item;
  double value = 0.0;
  std::string detail;
};

struct ConsultationState {
  std::map<std::string, ConfirmedSymptom> confirmed;
  std::map<std::string, DeniedSymptom> denied;
  std::vector<QuestionRecord> asked;
  std::set<std::string> asked_canonicals;
  Phase phase = Phase::symptom_elicitation;
  std::vector<Hypothesis> hypotheses;  // kept in rank order
  std::vector<TestOutcome> test_outcomes;
  std::vector<PlannedTest> test_plan;
  std::set<std::string> tests_answered;  // test ids
  std::vector<RiskConfirmation> risk_confirmations;
  std::set<std::string> risk_asked;  // "disease|description"
  double overall_confidence = 0.0;
  std::vector<Event> transcript;

  Hypothesis* find(std::string_view disease) {
    for (auto& h : hypotheses)
      if (h.disease == disease) return &h;
    return nullptr;
  }
  const Hypothesis* find(std::string_view disease) const {
    for (const auto& h : hypotheses)
      if (h.disease == disease) return &h;
    return nullptr;
  }

  /// Top `k` non-eliminated hypotheses in rank order.
  std::vector<const Hypothesis*> top(std::size_t k) const {
    std::vector<const Hypothesis*> out;
    for (const auto& h : hypotheses) {
      if (out.size() >= k) break;
      if (!h.eliminated) out.push_back(&h);
    }
    return out;
  }

  int questions_asked() const { return static_cast<int>(asked.size()); }
};

}  // namespace diagnosys
