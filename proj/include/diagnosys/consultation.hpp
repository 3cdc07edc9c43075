#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "diagnosys/dialogue.hpp"
#include "diagnosys/engine.hpp"
#include "diagnosys/llm.hpp"

namespace diagnosys {

struct TestQuestion {
  std::string id;  // the test id; results are posted against it
  std::string display_name;
  std::string unit;
  std::vector<std::string> diseases;  // planned diseases sharing this test
  std::string prompt_text;
};

struct ReportReady {};

using Prompt = std::variant<Question, TestQuestion, RiskQuestion, ReportReady>;

struct MessageOutcome {
  ExtractionResult extraction;
  std::vector<MatchResult> matched;     // accepted matches, one per (disease, canonical)
  std::vector<std::string> confirmed;   // canonicals newly confirmed by this message
};

/// One patient consultation: owns the state and sequences the two phases.
/// Not thread-safe; callers serialize access.
class Consultation {
 public:
  Consultation(std::shared_ptr<const DiagnosticContext> ctx, EngineConfig config,
               std::shared_ptr<LlmProvider> provider = nullptr)
      : ctx_(std::move(ctx)), config_(config), provider_(std::move(provider)) {
    config_.validate();
    state_ = make_state(*ctx_, config_);
    advance();
  }

  const ConsultationState& state() const noexcept { return state_; }
  const EngineConfig& config() const noexcept { return config_; }
  const DiagnosticContext& context() const noexcept { return *ctx_; }
  const Prompt& pending() const noexcept { return pending_; }
  bool report_ready() const noexcept { return std::holds_alternative<ReportReady>(pending_); }

  /// True when the last call moved the consultation out of symptom elicitation.
  bool entered_test_phase() const noexcept { return transitioned_; }

  MessageOutcome submit_text(std::string_view text) {
    require_phase(Phase::symptom_elicitation);
    transitioned_ = false;
    MessageOutcome out;
    std::vector<std::string> context;
    if (provider_) context = ctx_->retrieve_context(text);
    const bool first = !state_.questions_asked() && state_.confirmed.empty() && state_.denied.empty();
    out.extraction =
        extract_symptoms(text, context, provider_.get(), *ctx_, config_.sim_threshold,
                         first ? PromptId::symptom_extraction : PromptId::followup_extraction, summary());
    for (const auto& p : out.extraction.rejected)
      state_.transcript.push_back({EventKind::phrase_rejected, {}, {}, p, 0.0, {}});
    for (const auto& v : out.extraction.validated) {
      std::set<std::string> done;
      for (const auto& m : v.matches) {
        out.matched.push_back(m);
        if (!done.insert(m.canonical).second) continue;
        if (confirm_symptom(state_, *ctx_, config_, m, EvidenceSource::volunteered).changed)
          out.confirmed.push_back(m.canonical);
      }
    }
    advance();
    return out;
  }

  void answer(const std::string& question_id, Answer a) {
    require_phase(Phase::symptom_elicitation);
    const auto* q = std::get_if<Question>(&pending_);
    if (!q || q->id != question_id) throw Error(ErrorCode::stale_question, question_id);
    transitioned_ = false;
    const std::string canonical = q->canonical;
    state_.asked.push_back({question_id, canonical, a});
    state_.asked_canonicals.insert(canonical);
    switch (a) {
      case Answer::yes:
        confirm_symptom(state_, *ctx_, config_, canonical, kExactStrength, EvidenceSource::answered_yes);
        break;
      case Answer::no: deny_symptom(state_, *ctx_, config_, canonical); break;
      case Answer::unsure: state_.transcript.push_back({EventKind::symptom_unsure, canonical, {}, {}, 0.0, {}}); break;
    }
    advance();
  }

  std::vector<TestOutcome> submit_test(const std::string& test_id, std::optional<double> value) {
    require_phase(Phase::test_evaluation);
    transitioned_ = false;
    const auto ids = planned_test_ids(state_.test_plan);
    if (std::find(ids.begin(), ids.end(), test_id) == ids.end()) throw Error(ErrorCode::unknown_test, test_id);
    if (state_.tests_answered.count(test_id)) throw Error(ErrorCode::stale_question, test_id);
    auto outcomes = apply_test_result(state_, *ctx_, config_, test_id, value);
    advance();
    return outcomes;
  }

  void answer_risk(const std::string& risk_id, Answer a) {
    require_phase(Phase::test_evaluation);
    const auto* r = std::get_if<RiskQuestion>(&pending_);
    if (!r || r->id != risk_id) throw Error(ErrorCode::stale_question, risk_id);
    transitioned_ = false;
    apply_risk_answer(state_, *ctx_, config_, r->disease, r->factor, a);
    advance();
  }

  /// Final report. Allowed once every planned test and risk question has been
  /// answered (or skipped); repeated calls return the same report.
  const DiagnosisReport& finish() {
    if (report_) return *report_;
    if (state_.phase == Phase::symptom_elicitation)
      throw Error(ErrorCode::wrong_phase, "symptom elicitation is still running");
    if (!report_ready()) throw Error(ErrorCode::wrong_phase, "test or risk questions are still pending");
    report_ = synthesize_report(state_, ctx_->kb());
    state_.transcript.push_back({EventKind::report, {}, {}, {}, 0.0, {}});
    return *report_;
  }

  const std::optional<DiagnosisReport>& report() const noexcept { return report_; }

  /// Skips whatever is pending in the test phase (unknown value / unsure).
  void skip_pending() {
    if (const auto* t = std::get_if<TestQuestion>(&pending_)) submit_test(t->id, std::nullopt);
    else if (const auto* r = std::get_if<RiskQuestion>(&pending_)) answer_risk(r->id, Answer::unsure);
  }

 private:
  void require_phase(Phase p) const {
    if (state_.phase != p)
      throw Error(ErrorCode::wrong_phase, "consultation is in phase " + std::string(to_string(state_.phase)));
  }

  std::string summary() const {
    std::string s;
    for (const auto* h : state_.top(3)) s += h->disease + " (" + detail::fmt2(h->confidence) + ")\n";
    s += "confirmed: " + join(confirmed_canonicals(state_), ", ");
    return s;
  }

  void enter_test_phase() {
    state_.phase = Phase::test_evaluation;
    state_.test_plan = plan_tests(state_, *ctx_, config_);
    state_.transcript.push_back(
        {EventKind::phase_change, {}, {}, {}, 0.0, std::string(to_string(Phase::test_evaluation))});
    transitioned_ = true;
  }

  void advance() {
    if (state_.phase == Phase::symptom_elicitation) {
      if (should_transition(state_, config_)) {
        enter_test_phase();
      } else if (auto q = select_next_question(state_, *ctx_, config_)) {
        // Every call supersedes the outstanding question; ids are never reused.
        q->id = "q" + std::to_string(++serial_);
        pending_ = std::move(*q);
        return;
      } else {
        enter_test_phase();
      }
    }
    if (state_.phase == Phase::test_evaluation) {
      for (const auto& id : planned_test_ids(state_.test_plan)) {
        if (state_.tests_answered.count(id)) continue;
        TestQuestion t{id, {}, {}, {}, {}};
        for (const auto& p : state_.test_plan) {
          if (p.criterion.test_id != id) continue;
          if (t.display_name.empty()) {
            t.display_name = p.criterion.display_name;
            t.unit = p.criterion.unit;
          }
          t.diseases.push_back(p.disease);
        }
        t.prompt_text = "Have you had a " + t.display_name + " test? If so, what was the result" +
                        (t.unit.empty() ? std::string() : " (in " + t.unit + ")") + "?";
        pending_ = std::move(t);
        return;
      }
      auto risks = evaluate_risk_factors(state_, ctx_->kb());
      if (!risks.empty()) {
        risks.front().id = "r" + std::to_string(++serial_);
        pending_ = std::move(risks.front());
        return;
      }
    }
    pending_ = ReportReady{};
  }

  std::shared_ptr<const DiagnosticContext> ctx_;
  EngineConfig config_;
  std::shared_ptr<LlmProvider> provider_;
  ConsultationState state_;
  Prompt pending_ = ReportReady{};
  std::optional<DiagnosisReport> report_;
  unsigned long serial_ = 0;
  bool transitioned_ = false;
};

}  // namespace diagnosys
