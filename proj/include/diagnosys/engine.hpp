#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "diagnosys/embed.hpp"
#include "diagnosys/kb.hpp"
#include "diagnosys/state.hpp"
#include "diagnosys/text.hpp"

namespace diagnosys {

/// Everything derived once from a loaded knowledge base: the symptom phrase
/// index, the document-chunk index, canonical symptom embeddings and disease
/// profile centroids. Immutable after construction.
class DiagnosticContext {
 public:
  explicit DiagnosticContext(KnowledgeBase kb,
                             std::shared_ptr<const EmbeddingProvider> embedder = nullptr)
      : kb_(std::move(kb)),
        embedder_(embedder ? std::move(embedder) : std::make_shared<BuiltinEmbedder>()) {
    std::vector<std::pair<std::string, std::string>> phrases;
    for (const auto& [key, entry] : kb_.lexicon()) phrases.emplace_back(key, key);
    symptom_index_ = build_index(phrases, *embedder_);

    std::vector<std::pair<std::string, std::string>> chunks;
    for (const auto& [name, text] : kb_.documents())
      for (const auto& c : chunk_document(text, 1000, 200, name))
        chunks.emplace_back(name + "#" + std::to_string(c.start_offset), c.text);
    if (!chunks.empty()) chunk_index_ = build_index(chunks, *embedder_);

    for (const auto& canonical : kb_.canonical_symptoms())
      canonical_vectors_.emplace(canonical, embedder_->embed(canonical));
    for (const auto& d : kb_.diseases()) {
      std::vector<std::string> names;
      for (const auto& s : d.symptoms) names.push_back(s.canonical);
      centroids_.push_back(centroid(names));
    }
  }

  const KnowledgeBase& kb() const noexcept { return kb_; }
  const EmbeddingProvider& embedder() const noexcept { return *embedder_; }
  const VectorIndex& symptom_index() const noexcept { return symptom_index_; }
  const VectorIndex& chunk_index() const noexcept { return chunk_index_; }

  const EmbeddingVector& canonical_vector(const std::string& canonical) const {
    return canonical_vectors_.at(canonical);
  }
  const EmbeddingVector& disease_centroid(std::size_t disease_index) const {
    return centroids_.at(disease_index);
  }

  /// Arithmetic mean of canonical embeddings (zero vector for an empty list).
  EmbeddingVector centroid(const std::vector<std::string>& canonicals) const {
    EmbeddingVector c(std::vector<double>(symptom_index_.dimension(), 0.0));
    if (canonicals.empty()) return c;
    for (const auto& name : canonicals) {
      auto it = canonical_vectors_.find(name);
      const EmbeddingVector v = it != canonical_vectors_.end() ? it->second : embedder_->embed(name);
      for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] += v.values[i];
    }
    for (double& x : c.values) x /= static_cast<double>(canonicals.size());
    return c;
  }

  /// Document chunks most similar to the query, as retrieval context.
  std::vector<std::string> retrieve_context(std::string_view query, std::size_t k = 3) const {
    std::vector<std::string> out;
    if (chunk_index_.empty()) return out;
    for (const auto& hit : chunk_index_.search(*embedder_, query, k))
      out.push_back(chunk_index_.find(hit.key)->payload);
    return out;
  }

 private:
  KnowledgeBase kb_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  VectorIndex symptom_index_;
  VectorIndex chunk_index_;
  std::map<std::string, EmbeddingVector> canonical_vectors_;
  std::vector<EmbeddingVector> centroids_;
};

/// Resolves a patient phrase against the symptom lexicon. Exact (canonical or
/// synonym) hits win outright; otherwise every lexicon phrase whose cosine
/// similarity reaches `threshold` contributes a semantic match for each
/// disease listing its canonical symptom.
inline std::vector<MatchResult> match_symptom(std::string_view phrase, const KnowledgeBase& kb,
                                              const VectorIndex& symptom_index,
                                              const EmbeddingProvider& embedder, double threshold) {
  std::vector<MatchResult> out;
  const auto key = phrase_key(phrase);
  if (!key.empty()) {
    if (auto it = kb.lexicon().find(key); it != kb.lexicon().end()) {
      for (const auto& canonical : it->second.canonicals)
        for (auto idx : kb.diseases_listing(canonical))
          out.push_back({std::string(phrase), kb.diseases()[idx].name, canonical, kExactStrength, 1.0,
                         MatchKind::exact});
      return out;
    }
    if (!symptom_index.empty()) {
      std::map<std::string, double> best;  // canonical -> similarity
      for (const auto& hit : symptom_index.above(embedder.embed(key), threshold)) {
        auto lex = kb.lexicon().find(hit.key);
        if (lex == kb.lexicon().end()) continue;
        for (const auto& canonical : lex->second.canonicals) {
          auto [it, inserted] = best.try_emplace(canonical, hit.similarity);
          if (!inserted) it->second = std::max(it->second, hit.similarity);
        }
      }
      for (const auto& [canonical, sim] : best)
        for (auto idx : kb.diseases_listing(canonical))
          out.push_back({std::string(phrase), kb.diseases()[idx].name, canonical, kSemanticStrength, sim,
                         MatchKind::semantic});
      if (!out.empty()) return out;
    }
  }
  out.push_back({std::string(phrase), {}, {}, 0.0, 0.0, MatchKind::none});
  return out;
}

inline std::vector<MatchResult> match_symptom(std::string_view phrase, const DiagnosticContext& ctx,
                                              double threshold) {
  return match_symptom(phrase, ctx.kb(), ctx.symptom_index(), ctx.embedder(), threshold);
}

/// Per-disease confidence:
///   base = 1 - exp(-0.15 S), sf = min(ln(1+n)/4, 0.5), nf = min(0.15 N, 0.6)
///   C = clamp(0.9 (base + sf - nf), 0, 0.95)
inline double disease_confidence(double score, int matched, double penalty) {
  const double base = 1.0 - std::exp(-0.15 * score);
  const double symptom_factor = std::min(std::log1p(static_cast<double>(matched)) / 4.0, 0.5);
  const double negative_factor = std::min(0.15 * penalty, 0.6);
  const double raw = base + symptom_factor - negative_factor;
  return std::max(0.0, std::min(0.9 * raw, 0.95));
}

/// Margin of the top score over the runner-up, relative to the top score.
inline double score_margin(double top_score, double second_score) {
  if (top_score <= 0.0) return 0.0;
  if (second_score > 0.0) return (top_score - second_score) / top_score;
  return 1.0;
}

/// tanh-bounded overall confidence of the leading hypothesis; floored at 0 so
/// the result stays in [0, 0.9).
inline double overall_confidence(double top_score, double second_score, int top_matched,
                                 double top_penalty) {
  const double margin = score_margin(top_score, second_score);
  const double raw = 0.10 * top_matched + 0.25 * margin + 0.12 * top_score -
                     std::min(0.05 * top_penalty, 0.5);
  // tanh rounds to exactly 1 for raw > ~19 in double precision; keep the bound strict
  return std::clamp(std::tanh(raw) * 0.9, 0.0, std::nextafter(0.9, 0.0));
}

/// Uses the first two non-eliminated hypotheses in the given (rank) order.
inline double overall_confidence(const std::vector<Hypothesis>& ranked) {
  const Hypothesis* top = nullptr;
  const Hypothesis* second = nullptr;
  for (const auto& h : ranked) {
    if (h.eliminated) continue;
    if (!top) top = &h;
    else if (!second) { second = &h; break; }
  }
  if (!top) throw Error(ErrorCode::no_hypotheses, "every hypothesis is eliminated");
  return overall_confidence(top->score, second ? second->score : 0.0, top->matched, top->penalty);
}

inline std::vector<std::string> confirmed_canonicals(const ConsultationState& state) {
  std::vector<std::string> out;
  for (const auto& [name, _] : state.confirmed) out.push_back(name);
  return out;
}

/// Cosine between the centroid of confirmed symptom embeddings and the
/// centroid of the disease's whole profile; 0 with nothing confirmed.
inline double global_similarity(const ConsultationState& state, const DiagnosticContext& ctx,
                                std::size_t disease_index) {
  if (state.confirmed.empty()) return 0.0;
  return cosine_similarity(ctx.centroid(confirmed_canonicals(state)), ctx.disease_centroid(disease_index));
}

inline double global_similarity(const ConsultationState& state, const DiagnosticContext& ctx,
                                const DiseaseRecord& d) {
  const auto& ds = ctx.kb().diseases();
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds[i].name == d.name) return global_similarity(state, ctx, i);
  throw Error(ErrorCode::unknown_disease, d.name);
}

/// Recomputes every hypothesis' confidence, global similarity and hybrid rank
/// score, then sorts: eliminated last, rank score desc, confidence desc, name asc.
inline void hybrid_rank(ConsultationState& state, const DiagnosticContext& ctx, const EngineConfig& config) {
  const auto& ds = ctx.kb().diseases();
  const EmbeddingVector evidence = ctx.centroid(confirmed_canonicals(state));
  const bool any_evidence = !state.confirmed.empty();
  double max_local = 0.0;
  for (const auto& h : state.hypotheses)
    if (!h.eliminated) max_local = std::max(max_local, h.score);
  for (auto& h : state.hypotheses) {
    h.confidence = disease_confidence(h.score, h.matched, h.penalty);
    std::size_t idx = 0;
    while (ds[idx].name != h.disease) ++idx;
    h.global_similarity = any_evidence ? cosine_similarity(evidence, ctx.disease_centroid(idx)) : 0.0;
    const double local = max_local > 0.0 ? std::max(0.0, h.score) / max_local : 0.0;
    h.rank_score = config.global_weight * h.global_similarity + config.local_weight * local;
  }
  std::sort(state.hypotheses.begin(), state.hypotheses.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.eliminated != b.eliminated) return !a.eliminated;
    if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.disease < b.disease;
  });
  const bool any_alive = std::any_of(state.hypotheses.begin(), state.hypotheses.end(),
                                     [](const Hypothesis& h) { return !h.eliminated; });
  state.overall_confidence = any_alive ? overall_confidence(state.hypotheses) : 0.0;
}

/// Fresh consultation: one zero-evidence hypothesis per disease, ranked.
inline ConsultationState make_state(const DiagnosticContext& ctx, const EngineConfig& config) {
  ConsultationState state;
  for (const auto& d : ctx.kb().diseases()) state.hypotheses.push_back({.disease = d.name});
  hybrid_rank(state, ctx, config);
  return state;
}

namespace detail {

inline void apply_confirmation(ConsultationState& state, const KnowledgeBase& kb, const std::string& canonical,
                               double strength, int sign) {
  for (auto idx : kb.diseases_listing(canonical)) {
    const auto& d = kb.diseases()[idx];
    auto* h = state.find(d.name);
    if (!h) continue;
    h->score += sign * strength * d.find_symptom(canonical)->weight;
    h->matched += sign;
  }
}

inline void apply_denial(ConsultationState& state, const DeniedSymptom& denial, int sign) {
  for (const auto& [disease, penalty] : denial.penalties) {
    auto* h = state.find(disease);
    if (!h) continue;
    h->score -= sign * penalty;
    h->penalty += sign * penalty;
  }
}

}  // namespace detail

struct UpdateOutcome {
  bool changed = false;
  bool contradiction = false;
};

/// Adds strength * w_{s,d} to every disease listing the symptom. Confirming an
/// already-confirmed symptom is a no-op; confirming a denied one retracts the
/// denial first and logs a contradiction.
inline UpdateOutcome confirm_symptom(ConsultationState& state, const DiagnosticContext& ctx,
                                     const EngineConfig& config, const std::string& canonical,
                                     double strength, EvidenceSource source, std::string phrase = {}) {
  const auto& kb = ctx.kb();
  if (kb.diseases_listing(canonical).empty()) throw Error(ErrorCode::unknown_disease, "no disease lists " + canonical);
  UpdateOutcome out;
  if (state.confirmed.count(canonical)) return out;
  if (auto it = state.denied.find(canonical); it != state.denied.end()) {
    detail::apply_denial(state, it->second, -1);
    state.denied.erase(it);
    state.transcript.push_back({EventKind::contradiction, canonical, {}, {}, 0.0, "denied then confirmed"});
    out.contradiction = true;
  }
  detail::apply_confirmation(state, kb, canonical, strength, +1);
  state.confirmed[canonical] = {canonical, strength, source, phrase.empty() ? canonical : std::move(phrase)};
  state.transcript.push_back({EventKind::symptom_confirmed, canonical, {}, state.confirmed[canonical].phrase,
                              strength, std::string(to_string(source))});
  out.changed = true;
  hybrid_rank(state, ctx, config);
  return out;
}

inline UpdateOutcome confirm_symptom(ConsultationState& state, const DiagnosticContext& ctx,
                                     const EngineConfig& config, const MatchResult& match,
                                     EvidenceSource source = EvidenceSource::volunteered) {
  if (match.kind == MatchKind::none) return {};
  return confirm_symptom(state, ctx, config, match.canonical, match.strength, source, match.user_phrase);
}

/// Subtracts 0.8 * w_{s,d} from every listing disease's score and adds it to
/// that disease's penalty.
inline UpdateOutcome deny_symptom(ConsultationState& state, const DiagnosticContext& ctx,
                                  const EngineConfig& config, const std::string& canonical) {
  const auto& kb = ctx.kb();
  if (kb.diseases_listing(canonical).empty()) throw Error(ErrorCode::unknown_disease, "no disease lists " + canonical);
  UpdateOutcome out;
  if (state.denied.count(canonical)) return out;
  if (auto it = state.confirmed.find(canonical); it != state.confirmed.end()) {
    detail::apply_confirmation(state, kb, canonical, it->second.strength, -1);
    state.confirmed.erase(it);
    state.transcript.push_back({EventKind::contradiction, canonical, {}, {}, 0.0, "confirmed then denied"});
    out.contradiction = true;
  }
  DeniedSymptom denial{canonical, {}};
  for (auto idx : kb.diseases_listing(canonical)) {
    const auto& d = kb.diseases()[idx];
    denial.penalties[d.name] = kDenialFactor * d.find_symptom(canonical)->weight;
  }
  detail::apply_denial(state, denial, +1);
  state.denied.emplace(canonical, std::move(denial));
  state.transcript.push_back({EventKind::symptom_denied, canonical, {}, {}, 0.0, {}});
  out.changed = true;
  hybrid_rank(state, ctx, config);
  return out;
}

}  // namespace diagnosys
