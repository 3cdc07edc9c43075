#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "diagnosys/engine.hpp"
#include "diagnosys/error.hpp"
#include "diagnosys/text.hpp"

namespace diagnosys {

enum class PromptId {
  symptom_extraction,
  followup_extraction,
  normalization,
  question_generation,
  test_question,
  test_interpretation,
  risk_factor,
  final_synthesis,
};

inline constexpr std::array<PromptId, 8> kPromptIds = {
    PromptId::symptom_extraction, PromptId::followup_extraction, PromptId::normalization,
    PromptId::question_generation, PromptId::test_question,      PromptId::test_interpretation,
    PromptId::risk_factor,         PromptId::final_synthesis};

constexpr std::string_view to_string(PromptId id) {
  switch (id) {
    case PromptId::symptom_extraction: return "symptom_extraction";
    case PromptId::followup_extraction: return "followup_extraction";
    case PromptId::normalization: return "normalization";
    case PromptId::question_generation: return "question_generation";
    case PromptId::test_question: return "test_question";
    case PromptId::test_interpretation: return "test_interpretation";
    case PromptId::risk_factor: return "risk_factor";
    case PromptId::final_synthesis: return "final_synthesis";
  }
  return "";
}

inline constexpr std::array<std::string_view, 3> kPromptSlots = {"context", "patient_text", "state_summary"};

struct PromptTemplate {
  PromptId id;
  std::string_view body;
};

// Bodies are configuration data; every one binds all three slots.
inline constexpr std::array<PromptTemplate, 8> kPromptTemplates = {{
    {PromptId::symptom_extraction,
     "You extract symptoms for a diagnostic assistant.\n"
     "Reference material:\n{context}\n\n"
     "Consultation so far:\n{state_summary}\n\n"
     "Patient says: \"{patient_text}\"\n"
     "List only the symptoms the patient reports, one per line, using wording from the reference "
     "material where possible. Output nothing else."},
    {PromptId::followup_extraction,
     "The patient is answering a follow-up question.\n"
     "Reference material:\n{context}\n\n"
     "Consultation so far:\n{state_summary}\n\n"
     "Patient reply: \"{patient_text}\"\n"
     "List any new symptoms mentioned in the reply, one per line. Output nothing else."},
    {PromptId::normalization,
     "Map each raw symptom phrase to the closest standard medical term from the reference material.\n"
     "Reference material:\n{context}\n\n"
     "Consultation so far:\n{state_summary}\n\n"
     "Raw phrases:\n{patient_text}\n"
     "Answer with one standard term per line, in the same order."},
    {PromptId::question_generation,
     "Candidate symptoms and the hypotheses they separate:\n{context}\n\n"
     "Current diagnostic state:\n{state_summary}\n\n"
     "Target symptom: {patient_text}\n"
     "Write one short yes/no question asking the patient about the target symptom."},
    {PromptId::test_question,
     "Diagnostic test details:\n{context}\n\n"
     "Current diagnostic state:\n{state_summary}\n\n"
     "Test: {patient_text}\n"
     "Ask the patient, in plain language, whether they have a result for this test and what value it showed."},
    {PromptId::test_interpretation,
     "Stored test thresholds:\n{context}\n\n"
     "Current diagnostic state:\n{state_summary}\n\n"
     "Reported result: {patient_text}\n"
     "State whether the result supports or refutes each listed disease. Use only the stored thresholds."},
    {PromptId::risk_factor,
     "Known risk factors of the leading hypothesis:\n{context}\n\n"
     "Current diagnostic state:\n{state_summary}\n\n"
     "Risk factor to ask about: {patient_text}\n"
     "Write one short yes/no question about this risk factor."},
    {PromptId::final_synthesis,
     "Evidence collected:\n{context}\n\n"
     "Ranked hypotheses and test outcomes:\n{state_summary}\n\n"
     "Patient statements: {patient_text}\n"
     "Summarize the most likely condition, the supporting symptoms, tests and risk factors, the "
     "conditions that were excluded and why, and the kind of specialist to consult. Name only "
     "diseases that appear above."},
}};

inline const PromptTemplate& prompt_template(PromptId id) {
  for (const auto& t : kPromptTemplates)
    if (t.id == id) return t;
  throw Error(ErrorCode::missing_slot, "unknown template");
}

/// Substitutes every `{slot}` marker. Every slot of the template must be bound.
inline std::string render_prompt(PromptId id, const std::map<std::string, std::string>& slots) {
  for (auto slot : kPromptSlots)
    if (!slots.count(std::string(slot))) throw Error(ErrorCode::missing_slot, std::string(slot));
  // Single pass, so slot values are never themselves scanned for markers.
  const std::string_view body = prompt_template(id).body;
  std::string out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto open = body.find('{', pos);
    if (open == std::string_view::npos) break;
    auto close = body.find('}', open);
    if (close == std::string_view::npos) break;
    out += body.substr(pos, open - pos);
    auto it = slots.find(std::string(body.substr(open + 1, close - open - 1)));
    out += it != slots.end() ? it->second : std::string(body.substr(open, close - open + 1));
    pos = close + 1;
  }
  out += body.substr(std::min(pos, body.size()));
  return out;
}

struct LlmConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "gpt-4o";
  double temperature = 0.3;
  int max_tokens = 50;
  int retries = 2;
  std::chrono::milliseconds timeout{10000};

  void validate() const {
    if (!(temperature >= 0.0 && temperature <= 1.0))
      throw Error(ErrorCode::invalid_config, "temperature must lie in [0,1]");
    if (max_tokens < 1) throw Error(ErrorCode::invalid_config, "max_tokens must be >= 1");
    if (retries < 0) throw Error(ErrorCode::invalid_config, "retries must be >= 0");
  }
};

/// Chat-completion boundary. Implementations throw
/// Error(ErrorCode::provider_unavailable) when the backend cannot answer.
class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Splits a provider response into phrases: newline- or comma-separated,
/// list bullets and numbering stripped, lowercased.
inline std::vector<std::string> parse_phrase_list(std::string_view response) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string current;
  auto flush = [&] {
    std::string_view t = trim(current);
    while (!t.empty() && (t.front() == '-' || t.front() == '*' || t.front() == '.' ||
                          std::isdigit(static_cast<unsigned char>(t.front())) || t.front() == ')'))
      t = trim(t.substr(1));
    while (!t.empty() && (t.back() == '.' || t.back() == ';')) t = trim(t.substr(0, t.size() - 1));
    auto phrase = to_lower(t);
    if (!phrase.empty() && seen.insert(phrase).second) out.push_back(phrase);
    current.clear();
  };
  for (char c : response) {
    if (c == '\n' || c == ',') flush();
    else current.push_back(c);
  }
  flush();
  return out;
}

/// Greedy left-to-right longest match of the normalized text against the
/// symptom lexicon; matched token spans are consumed. Returns the declared
/// spelling of each hit, first occurrence only.
inline std::vector<std::string> offline_extract(std::string_view text, const KnowledgeBase& kb) {
  const auto tokens = normalize_input(text);
  std::size_t longest = 0;
  for (const auto& [key, _] : kb.lexicon())
    longest = std::max<std::size_t>(longest, std::count(key.begin(), key.end(), ' ') + 1);
  std::vector<std::string> phrases;
  std::set<std::string> seen;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t taken = 0;
    for (std::size_t len = std::min(longest, tokens.size() - i); len >= 1; --len) {
      std::string key = tokens[i];
      for (std::size_t j = 1; j < len; ++j) key += " " + tokens[i + j];
      if (auto it = kb.lexicon().find(key); it != kb.lexicon().end()) {
        if (seen.insert(it->second.phrase).second) phrases.push_back(it->second.phrase);
        taken = len;
        break;
      }
    }
    i += taken ? taken : 1;
  }
  return phrases;
}

struct ValidatedPhrase {
  std::string phrase;
  std::vector<MatchResult> matches;  // one per (disease, canonical); never kind none
};

struct ExtractionResult {
  std::vector<std::string> raw_phrases;
  std::vector<ValidatedPhrase> validated;
  std::vector<std::string> rejected;
};

/// Keeps a phrase iff it resolves exactly through the synonym lexicon or
/// semantically at or above `threshold`; everything else is rejected.
inline std::pair<std::vector<ValidatedPhrase>, std::vector<std::string>> validate_against_kb(
    const std::vector<std::string>& phrases, const DiagnosticContext& ctx, double threshold) {
  std::vector<ValidatedPhrase> validated;
  std::vector<std::string> rejected;
  for (const auto& p : phrases) {
    auto matches = match_symptom(p, ctx, threshold);
    if (matches.size() == 1 && matches.front().kind == MatchKind::none) rejected.push_back(p);
    else validated.push_back({p, std::move(matches)});
  }
  return {std::move(validated), std::move(rejected)};
}

/// Extracts symptom phrases from patient text. With a provider the rendered
/// prompt goes to the LLM; without one the offline lexicon scan runs. Either
/// way the phrases pass the KB validation filter before use.
inline ExtractionResult extract_symptoms(std::string_view text, const std::vector<std::string>& retrieved_context,
                                         LlmProvider* provider, const DiagnosticContext& ctx, double threshold,
                                         PromptId prompt = PromptId::symptom_extraction,
                                         std::string_view state_summary = "none") {
  ExtractionResult r;
  if (provider) {
    auto rendered = render_prompt(prompt, {{"context", join(retrieved_context, "\n---\n")},
                                           {"patient_text", std::string(text)},
                                           {"state_summary", std::string(state_summary)}});
    r.raw_phrases = parse_phrase_list(provider->complete(rendered));
  } else {
    r.raw_phrases = offline_extract(text, ctx.kb());
  }
  auto [validated, rejected] = validate_against_kb(r.raw_phrases, ctx, threshold);
  r.validated = std::move(validated);
  r.rejected = std::move(rejected);
  return r;
}

/// Maps each phrase to one canonical symptom name: exact lexicon hit first,
/// else the most similar canonical at or above `threshold`. Unresolvable
/// phrases are dropped and reported through `dropped`.
inline std::vector<std::string> normalize_terms(const std::vector<std::string>& phrases,
                                                const DiagnosticContext& ctx, double threshold,
                                                std::vector<std::string>* dropped = nullptr) {
  std::vector<std::string> out;
  for (const auto& p : phrases) {
    auto matches = match_symptom(p, ctx, threshold);
    const MatchResult* best = nullptr;
    for (const auto& m : matches) {
      if (m.kind == MatchKind::none) continue;
      if (!best || m.similarity > best->similarity ||
          (m.similarity == best->similarity && m.canonical < best->canonical))
        best = &m;
    }
    if (best) out.push_back(best->canonical);
    else if (dropped) dropped->push_back(p);
  }
  return out;
}

}  // namespace diagnosys
