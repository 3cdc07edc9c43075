#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diagnosys/engine.hpp"
#include "diagnosys/state.hpp"

namespace diagnosys {

struct Question {
  std::string id;
  std::string canonical;
  std::string prompt_text;
  std::string justification;
  double info_score = 0.0;
};

namespace detail {

inline std::string name_list(const std::vector<std::string>& names) {
  if (names.empty()) return "none";
  if (names.size() == 1) return names.front();
  std::string out;
  for (std::size_t i = 0; i + 1 < names.size(); ++i) out += (i ? ", " : "") + names[i];
  return out + " and " + names.back();
}

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// Picks the unasked symptom that best separates the leading hypotheses.
///
/// The pool is the unasked symptoms of the top-k hypotheses (all unasked KB
/// symptoms when that runs dry). Each candidate scores
///   info(s) = (sum of w_{s,d} over top-k diseases listing s) * (K - m_s + 1) / K
/// with m_s the number of top-k diseases listing s. Ties go to the larger
/// single-disease weight, then to the name.
inline std::optional<Question> select_next_question(const ConsultationState& state, const DiagnosticContext& ctx,
                                                    const EngineConfig& config) {
  const auto& kb = ctx.kb();
  const auto top = state.top(static_cast<std::size_t>(config.top_k_focus));
  auto used = [&](const std::string& c) {
    return state.asked_canonicals.count(c) || state.confirmed.count(c) || state.denied.count(c);
  };
  std::set<std::string> pool;
  for (const auto* h : top)
    for (const auto& s : kb.at(h->disease).symptoms)
      if (!used(s.canonical)) pool.insert(s.canonical);
  const bool fallback = pool.empty();
  if (fallback)
    for (const auto& c : kb.canonical_symptoms())
      if (!used(c)) pool.insert(c);
  if (pool.empty()) return std::nullopt;

  const double k = static_cast<double>(top.size());
  std::optional<Question> best;
  double best_weight = -1.0;
  for (const auto& canonical : pool) {
    double sum = 0.0;
    double max_weight = 0.0;
    int listing = 0;
    std::vector<std::string> with, without;
    for (const auto* h : top) {
      if (const auto* s = kb.at(h->disease).find_symptom(canonical)) {
        sum += s->weight;
        max_weight = std::max(max_weight, s->weight);
        ++listing;
        with.push_back(h->disease);
      } else {
        without.push_back(h->disease);
      }
    }
    if (listing == 0)
      for (auto idx : kb.diseases_listing(canonical))
        max_weight = std::max(max_weight, kb.diseases()[idx].find_symptom(canonical)->weight);
    const double info = k > 0.0 ? sum * (k - listing + 1.0) / k : 0.0;
    const bool better = !best || info > best->info_score ||
                        (info == best->info_score && max_weight > best_weight) ||
                        (info == best->info_score && max_weight == best_weight && canonical < best->canonical);
    if (!better) continue;
    std::string why;
    if (fallback) {
      why = "The leading hypotheses have no unexplored symptoms left; '" + canonical +
            "' widens the search across the knowledge base.";
    } else if (without.empty()) {
      why = "'" + canonical + "' is expected in all of " + detail::name_list(with) +
            "; a no answer weakens every one of them.";
    } else {
      why = "'" + canonical + "' is listed for " + detail::name_list(with) + " but not for " +
            detail::name_list(without) + ", so the answer separates these hypotheses.";
    }
    best = Question{"q" + std::to_string(state.asked.size() + 1), canonical,
                    "Have you been experiencing " + canonical + "?", why, info};
    best_weight = max_weight;
  }
  return best;
}

/// Phase 1 ends once enough symptoms are confirmed after the minimum number
/// of questions, when the question budget is spent, or (if enabled) when
/// overall confidence reaches the early-stop level.
inline bool should_transition(const ConsultationState& state, const EngineConfig& config) {
  const int asked = state.questions_asked();
  const int confirmed = static_cast<int>(state.confirmed.size());
  if (confirmed >= config.min_symptoms && asked >= config.min_questions) return true;
  if (asked >= config.max_questions) return true;
  if (config.confidence_early_stop && state.overall_confidence >= *config.confidence_early_stop &&
      asked >= config.min_questions)
    return true;
  return false;
}

/// Tests of the top-k live hypotheses in rank order, decisive tests first
/// within each disease.
inline std::vector<PlannedTest> plan_tests(const ConsultationState& state, const DiagnosticContext& ctx,
                                           const EngineConfig& config) {
  std::vector<PlannedTest> plan;
  for (const auto* h : state.top(static_cast<std::size_t>(config.top_k_focus))) {
    auto tests = ctx.kb().at(h->disease).tests;
    std::stable_sort(tests.begin(), tests.end(),
                     [](const TestCriterion& a, const TestCriterion& b) { return a.decisive && !b.decisive; });
    for (auto& t : tests) plan.push_back({h->disease, std::move(t)});
  }
  return plan;
}

/// Distinct test ids of a plan, first-appearance order.
inline std::vector<std::string> planned_test_ids(const std::vector<PlannedTest>& plan) {
  std::vector<std::string> ids;
  for (const auto& p : plan)
    if (std::find(ids.begin(), ids.end(), p.criterion.test_id) == ids.end()) ids.push_back(p.criterion.test_id);
  return ids;
}

inline TestOutcome interpret_test_result(const TestCriterion& criterion, std::optional<double> value,
                                         std::string disease = {}) {
  TestOutcome out{std::move(disease), criterion.test_id, value, Verdict::skipped, false};
  if (!value) return out;
  if (!std::isfinite(*value)) throw Error(ErrorCode::non_finite_value, criterion.test_id);
  out.verdict = holds(criterion.comparator, *value, criterion.threshold) ? Verdict::supports : Verdict::refutes;
  out.decisive_elimination = out.verdict == Verdict::refutes && criterion.decisive;
  return out;
}

/// Applies one reported value to every planned (disease, test) sharing the
/// test id: supports add the fixed test boost, decisive refutations
/// eliminate. Re-ranks afterwards.
inline std::vector<TestOutcome> apply_test_result(ConsultationState& state, const DiagnosticContext& ctx,
                                                  const EngineConfig& config, const std::string& test_id,
                                                  std::optional<double> value) {
  if (value && !std::isfinite(*value)) throw Error(ErrorCode::non_finite_value, test_id);
  std::vector<TestOutcome> outcomes;
  for (const auto& p : state.test_plan) {
    if (p.criterion.test_id != test_id) continue;
    auto outcome = interpret_test_result(p.criterion, value, p.disease);
    auto* h = state.find(p.disease);
    if (outcome.verdict == Verdict::supports) h->score += kTestSupportBoost;
    state.transcript.push_back({EventKind::test_result, {}, p.disease, test_id, value.value_or(0.0),
                                std::string(to_string(outcome.verdict))});
    if (outcome.decisive_elimination && !h->eliminated) {
      h->eliminated = true;
      h->elimination_reason = p.criterion.display_name + " = " + detail::fmt2(*value) + " " + p.criterion.unit +
                              " fails " + std::string(to_string(p.criterion.comparator)) + " " +
                              detail::fmt2(p.criterion.threshold);
      state.transcript.push_back({EventKind::elimination, {}, p.disease, test_id, *value, h->elimination_reason});
    }
    outcomes.push_back(outcome);
    state.test_outcomes.push_back(std::move(outcome));
  }
  if (outcomes.empty()) throw Error(ErrorCode::unknown_test, test_id);
  state.tests_answered.insert(test_id);
  hybrid_rank(state, ctx, config);
  return outcomes;
}

struct RiskQuestion {
  std::string id;
  std::string disease;
  RiskFactor factor;
  std::string prompt_text;
};

inline std::string risk_key(const std::string& disease, const RiskFactor& rf) {
  return disease + "|" + rf.description;
}

/// Unasked risk factors of the leading live hypothesis.
inline std::vector<RiskQuestion> evaluate_risk_factors(const ConsultationState& state, const KnowledgeBase& kb) {
  std::vector<RiskQuestion> out;
  auto top = state.top(1);
  if (top.empty()) return out;
  const auto& d = kb.at(top.front()->disease);
  for (const auto& rf : d.risk_factors) {
    if (state.risk_asked.count(risk_key(d.name, rf))) continue;
    out.push_back({"r" + std::to_string(state.risk_asked.size() + out.size() + 1), d.name, rf,
                   "Does this apply to you: " + rf.description + "?"});
  }
  return out;
}

/// A yes adds the risk factor's weight to the disease score; no and unsure
/// only mark it asked.
inline void apply_risk_answer(ConsultationState& state, const DiagnosticContext& ctx, const EngineConfig& config,
                              const std::string& disease, const RiskFactor& rf, Answer answer) {
  if (!state.risk_asked.insert(risk_key(disease, rf)).second) return;
  state.transcript.push_back({EventKind::risk_answer, {}, disease, rf.description, rf.weight,
                              std::string(to_string(answer))});
  if (answer != Answer::yes) return;
  if (auto* h = state.find(disease)) h->score += rf.weight;
  state.risk_confirmations.push_back({disease, rf});
  hybrid_rank(state, ctx, config);
}

enum class AttributionKind { confirmed, denied, test, risk };

constexpr std::string_view to_string(AttributionKind k) {
  switch (k) {
    case AttributionKind::confirmed: return "confirmed";
    case AttributionKind::denied: return "denied";
    case AttributionKind::test: return "test";
    case AttributionKind::risk: return "risk";
  }
  return "";
}

struct AttributionRow {
  std::string label;
  AttributionKind kind;
};

/// Signed per-evidence, per-disease contributions. Columns follow the
/// current ranking; each column sums to that disease's score.
struct AttributionMatrix {
  std::vector<AttributionRow> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> cells;  // [row][column]

  double column_sum(std::size_t col) const {
    double s = 0.0;
    for (const auto& r : cells) s += r[col];
    return s;
  }
};

inline AttributionMatrix attribution_matrix(const ConsultationState& state, const KnowledgeBase& kb) {
  if (state.confirmed.empty() && state.denied.empty())
    throw Error(ErrorCode::empty_evidence, "no symptom has been reported");
  AttributionMatrix m;
  for (const auto& h : state.hypotheses) m.columns.push_back(h.disease);
  auto add_row = [&](std::string label, AttributionKind kind) {
    m.rows.push_back({std::move(label), kind});
    m.cells.emplace_back(m.columns.size(), 0.0);
    return m.cells.size() - 1;
  };
  std::set<std::string> placed;
  for (const auto& ev : state.transcript) {
    if (ev.kind != EventKind::symptom_confirmed && ev.kind != EventKind::symptom_denied) continue;
    const auto& c = ev.canonical;
    if (placed.count(c)) continue;
    if (auto it = state.confirmed.find(c); it != state.confirmed.end()) {
      placed.insert(c);
      auto r = add_row(c, AttributionKind::confirmed);
      for (std::size_t j = 0; j < m.columns.size(); ++j)
        if (const auto* s = kb.at(m.columns[j]).find_symptom(c)) m.cells[r][j] = it->second.strength * s->weight;
    } else if (auto dt = state.denied.find(c); dt != state.denied.end()) {
      placed.insert(c);
      auto r = add_row(c, AttributionKind::denied);
      for (std::size_t j = 0; j < m.columns.size(); ++j)
        if (auto p = dt->second.penalties.find(m.columns[j]); p != dt->second.penalties.end())
          m.cells[r][j] = -p->second;
    }
  }
  std::map<std::string, std::size_t> test_rows;
  for (const auto& o : state.test_outcomes) {
    if (o.verdict != Verdict::supports) continue;
    auto [it, fresh] = test_rows.try_emplace(o.test_id, 0);
    if (fresh) it->second = add_row("test: " + o.test_id, AttributionKind::test);
    auto col = std::find(m.columns.begin(), m.columns.end(), o.disease) - m.columns.begin();
    m.cells[it->second][static_cast<std::size_t>(col)] += kTestSupportBoost;
  }
  for (const auto& rc : state.risk_confirmations) {
    auto r = add_row("risk: " + rc.factor.description, AttributionKind::risk);
    auto col = std::find(m.columns.begin(), m.columns.end(), rc.disease) - m.columns.begin();
    m.cells[r][static_cast<std::size_t>(col)] = rc.factor.weight;
  }
  return m;
}

struct RankedEntry {
  std::string disease;
  double confidence = 0.0;
  double rank_score = 0.0;
};

struct Exclusion {
  std::string canonical;
  std::vector<std::string> weighed_against;
};

struct DiagnosisReport {
  bool inconclusive = false;
  std::optional<RankedEntry> most_likely;
  std::vector<RankedEntry> runners_up;
  double overall_confidence = 0.0;
  std::vector<std::string> supporting_symptoms;
  std::vector<Exclusion> denied_exclusions;
  std::vector<TestOutcome> test_evidence;
  std::vector<RiskConfirmation> risk_evidence;
  std::vector<std::pair<std::string, std::string>> eliminated;  // disease, reason
  std::string recommended_specialist;
  std::string next_steps;
  std::vector<std::string> transcript_digest;
};

inline std::string describe(const Event& e) {
  switch (e.kind) {
    case EventKind::symptom_confirmed: return "confirmed " + e.canonical + " (" + e.detail + ")";
    case EventKind::symptom_denied: return "denied " + e.canonical;
    case EventKind::symptom_unsure: return "unsure about " + e.canonical;
    case EventKind::contradiction: return "contradiction on " + e.canonical + ": " + e.detail;
    case EventKind::phrase_rejected: return "rejected phrase '" + e.item + "' (not in knowledge base)";
    case EventKind::phrase_dropped: return "dropped phrase '" + e.item + "'";
    case EventKind::phase_change: return "phase -> " + e.detail;
    case EventKind::test_result:
      return e.item + " for " + e.disease + ": " + e.detail +
             (e.detail == "skipped" ? std::string() : " (value " + detail::fmt2(e.value) + ")");
    case EventKind::elimination: return "eliminated " + e.disease + ": " + e.detail;
    case EventKind::risk_answer: return "risk factor '" + e.item + "' for " + e.disease + ": " + e.detail;
    case EventKind::report: return "report issued";
  }
  return {};
}

/// Deterministic evidence-linked report. Moves the consultation to concluded.
inline DiagnosisReport synthesize_report(ConsultationState& state, const KnowledgeBase& kb) {
  if (state.hypotheses.empty()) throw Error(ErrorCode::no_hypotheses, "no hypotheses to report");
  DiagnosisReport r;
  const auto top = state.top(3);
  r.overall_confidence = state.overall_confidence;
  for (const auto& o : state.test_outcomes) r.test_evidence.push_back(o);
  for (const auto& h : state.hypotheses)
    if (h.eliminated) r.eliminated.emplace_back(h.disease, h.elimination_reason);
  for (const auto& [canonical, d] : state.denied) {
    Exclusion ex{canonical, {}};
    for (const auto& [disease, _] : d.penalties) ex.weighed_against.push_back(disease);
    r.denied_exclusions.push_back(std::move(ex));
  }
  if (top.empty()) {
    r.inconclusive = true;
    r.recommended_specialist = "General physician";
    r.next_steps =
        "Every candidate condition was ruled out by a decisive test result. The findings do not fit the "
        "conditions covered here; see a general physician for a broader assessment.";
  } else {
    const auto& best = *top.front();
    r.most_likely = RankedEntry{best.disease, best.confidence, best.rank_score};
    for (std::size_t i = 1; i < top.size(); ++i)
      r.runners_up.push_back({top[i]->disease, top[i]->confidence, top[i]->rank_score});
    const auto& d = kb.at(best.disease);
    std::vector<std::pair<double, std::string>> support;
    for (const auto& [canonical, c] : state.confirmed)
      if (const auto* s = d.find_symptom(canonical)) support.emplace_back(c.strength * s->weight, canonical);
    std::stable_sort(support.begin(), support.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (auto& [_, name] : support) r.supporting_symptoms.push_back(name);
    for (const auto& rc : state.risk_confirmations)
      if (rc.disease == best.disease) r.risk_evidence.push_back(rc);
    r.recommended_specialist = specialist_of(d).value_or("General physician");
    std::istringstream in(d.management);
    std::vector<std::string> steps;
    for (std::string line; std::getline(in, line);)
      if (!starts_with_ci(trim(line), "specialist:")) steps.push_back(line);
    while (!steps.empty() && trim(steps.front()).empty()) steps.erase(steps.begin());
    r.next_steps = std::string(trim(join(steps, "\n")));
  }
  for (const auto& e : state.transcript) r.transcript_digest.push_back(describe(e));
  if (state.phase != Phase::concluded) {
    state.phase = Phase::concluded;
    state.transcript.push_back({EventKind::phase_change, {}, {}, {}, 0.0, std::string(to_string(Phase::concluded))});
  }
  return r;
}

inline std::string render_report(const DiagnosisReport& r) {
  std::ostringstream out;
  out << "=== Diagnostic report ===\n";
  if (r.inconclusive) {
    out << "Result: inconclusive\n";
  } else {
    out << "Most likely: " << r.most_likely->disease << " (confidence " << detail::fmt2(r.most_likely->confidence)
        << ", rank score " << detail::fmt2(r.most_likely->rank_score) << ")\n";
    for (const auto& e : r.runners_up)
      out << "Also consider: " << e.disease << " (confidence " << detail::fmt2(e.confidence) << ", rank score "
          << detail::fmt2(e.rank_score) << ")\n";
    out << "Overall confidence: " << detail::fmt2(r.overall_confidence) << "\n";
    out << "Supporting symptoms: " << detail::name_list(r.supporting_symptoms) << "\n";
  }
  if (!r.denied_exclusions.empty()) {
    out << "Denied symptoms:\n";
    for (const auto& ex : r.denied_exclusions)
      out << "  - " << ex.canonical << " (weighed against " << detail::name_list(ex.weighed_against) << ")\n";
  }
  if (!r.test_evidence.empty()) {
    out << "Test evidence:\n";
    for (const auto& t : r.test_evidence) {
      out << "  - " << t.test_id << " for " << t.disease << ": " << to_string(t.verdict);
      if (t.reported_value) out << " (value " << detail::fmt2(*t.reported_value) << ")";
      out << "\n";
    }
  }
  for (const auto& [d, why] : r.eliminated) out << "Excluded: " << d << " - " << why << "\n";
  for (const auto& rc : r.risk_evidence) out << "Risk factor present: " << rc.factor.description << "\n";
  out << "Recommended specialist: " << r.recommended_specialist << "\n";
  if (!r.next_steps.empty()) out << "Next steps:\n" << r.next_steps << "\n";
  return out.str();
}

}  // namespace diagnosys
