#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "common.hpp"

using namespace diagnosys;

namespace {

// Reference evaluators written straight from the formulas, kept apart from the engine code.
double ref_confidence(double S, int n, double N) {
  double base = 1.0 - std::exp(-0.15 * S);
  double sf = std::log(1.0 + n) / 4.0;
  if (sf > 0.5) sf = 0.5;
  double nf = 0.15 * N;
  if (nf > 0.6) nf = 0.6;
  double c = 0.9 * (base + sf - nf);
  if (c < 0.0) c = 0.0;
  if (c > 0.95) c = 0.95;
  return c;
}

double ref_overall(double s1, double s2, int n, double N) {
  double margin = s1 <= 0 ? 0.0 : (s2 > 0 ? (s1 - s2) / s1 : 1.0);
  double pen = 0.05 * N < 0.5 ? 0.05 * N : 0.5;
  double v = std::tanh(0.10 * n + 0.25 * margin + 0.12 * s1 - pen) * 0.9;
  return v < 0 ? 0 : v;
}

/// Embeds known phrases onto fixed axes; everything else gets the query vector.
class AxisEmbedder final : public EmbeddingProvider {
 public:
  AxisEmbedder(std::vector<std::string> known, std::vector<double> query) : known_(std::move(known)), query_(query) {}
  std::string mode() const override { return "axis-stub"; }
  EmbeddingVector embed(std::string_view text) const override {
    std::vector<double> v(16, 0.0);
    auto it = std::find(known_.begin(), known_.end(), text);
    if (it == known_.end()) return EmbeddingVector(query_);
    v[static_cast<std::size_t>(it - known_.begin())] = 1.0;
    return EmbeddingVector(v);
  }

 private:
  std::vector<std::string> known_;
  std::vector<double> query_;
};

// Toy lexicon keys: cough, feeling sick, fever, headache, high temperature, nausea, rash, skin rash, wheeze.
// "fever" sits on axis 2.
std::vector<std::string> toy_keys() {
  std::vector<std::string> keys;
  const auto kb = testkit::toy_kb();
  for (const auto& [k, _] : kb.lexicon()) keys.push_back(k);
  return keys;
}

// Query with cosine x / |(x, y)| against "fever"; axis 15 belongs to no key.
std::vector<double> query_at(double x, double y) {
  std::vector<double> q(16, 0.0);
  q[2] = x;
  q[15] = y;
  return q;
}

}  // namespace

TEST(Confidence, MatchesReferenceOnRandomTriples) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> S(-5, 30), N(0, 10);
  std::uniform_int_distribution<int> n(0, 25);
  for (int i = 0; i < 100000; ++i) {
    const double s = S(rng), pen = N(rng);
    const int m = n(rng);
    const double c = disease_confidence(s, m, pen);
    ASSERT_NEAR(c, ref_confidence(s, m, pen), 1e-9);
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 0.95);
  }
}

TEST(Confidence, HandValues) {
  EXPECT_EQ(disease_confidence(0, 0, 0), 0.0);
  // S=4, n=2, N=0: 0.9 * (1 - e^-0.6 + ln3/4)
  EXPECT_NEAR(disease_confidence(4, 2, 0), 0.9 * (1 - std::exp(-0.6) + std::log(3.0) / 4), 1e-12);
  // S=4, n=2, N=1: subtract 0.15 inside
  EXPECT_NEAR(disease_confidence(4, 2, 1), 0.9 * (1 - std::exp(-0.6) + std::log(3.0) / 4 - 0.15), 1e-12);
  EXPECT_EQ(disease_confidence(100, 100, 0), 0.95);  // saturates at the cap
  EXPECT_EQ(disease_confidence(1, 1, 10), 0.0);      // penalty floor
  // penalty factor caps at 0.6
  EXPECT_NEAR(disease_confidence(5, 2, 4) , disease_confidence(5, 2, 100), 1e-15);
}

TEST(OverallConfidence, BoundAndBranches) {
  EXPECT_EQ(score_margin(3.0, 0.0), 1.0);
  EXPECT_EQ(score_margin(3.0, -1.0), 1.0);
  EXPECT_EQ(score_margin(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(score_margin(4.0, 1.0), 0.75);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> S(0, 40), N(0, 20);
  std::uniform_int_distribution<int> n(0, 30);
  for (int i = 0; i < 10000; ++i) {
    double a = S(rng), b = S(rng);
    if (b > a) std::swap(a, b);
    if (i % 10 == 0) b = 0;
    const int m = n(rng);
    const double pen = N(rng);
    const double c = overall_confidence(a, b, m, pen);
    ASSERT_NEAR(c, ref_overall(a, b, m, pen), 1e-9);
    ASSERT_LT(c, 0.9);
    ASSERT_GE(c, 0.0);
  }
  EXPECT_LT(overall_confidence(1e6, 0, 1000, 0), 0.9);  // tanh saturates to 1.0 here
  EXPECT_GT(overall_confidence(1e6, 0, 1000, 0), 0.8999999);
}

TEST(OverallConfidence, SkipsEliminatedAndThrowsWhenNoneLeft) {
  std::vector<Hypothesis> hs{{.disease = "A", .score = 9, .matched = 3, .eliminated = true},
                             {.disease = "B", .score = 4, .matched = 2},
                             {.disease = "C", .score = 1, .matched = 1}};
  EXPECT_DOUBLE_EQ(overall_confidence(hs), overall_confidence(4, 1, 2, 0));
  for (auto& h : hs) h.eliminated = true;
  EXPECT_THROW(overall_confidence(hs), Error);
}

TEST(Matching, ExactSynonymHitsEveryListingDisease) {
  auto ctx = testkit::toy();
  auto ms = match_symptom("High Temperature", *ctx, 0.55);
  ASSERT_EQ(ms.size(), 2u);  // Alpha and Beta list fever
  for (const auto& m : ms) {
    EXPECT_EQ(m.kind, MatchKind::exact);
    EXPECT_EQ(m.canonical, "fever");
    EXPECT_EQ(m.strength, 1.0);
  }
  EXPECT_EQ(match_symptom("purple elbows", *ctx, 0.55).front().kind, MatchKind::none);
  EXPECT_EQ(match_symptom("the of and", *ctx, 0.55).front().kind, MatchKind::none);
}

TEST(Matching, SemanticAcceptsIffSimilarityReachesThreshold) {
  const auto keys = toy_keys();
  ASSERT_EQ(keys.size(), 9u);
  ASSERT_EQ(keys[2], "fever");
  const double target = 0.55;
  int accepted = 0, rejected = 0;
  bool saw_exact = false;
  for (int step = -200; step <= 200; ++step) {
    const double x = target + step * 1e-11;
    const double y = std::sqrt(1.0 - x * x);
    auto kb = testkit::toy_kb();
    const auto embedder = std::make_shared<AxisEmbedder>(keys, query_at(x, y));
    DiagnosticContext ctx(kb, embedder);
    const double sim = cosine_similarity(embedder->embed("hot body"), embedder->embed("fever"));
    if (sim == target) saw_exact = true;
    auto ms = match_symptom("hot body", ctx, target);
    bool fever_hit = false;
    for (const auto& m : ms)
      if (m.canonical == "fever") {
        fever_hit = true;
        EXPECT_EQ(m.kind, MatchKind::semantic);
        EXPECT_EQ(m.strength, 0.6);
        EXPECT_EQ(m.similarity, sim);
      }
    EXPECT_EQ(fever_hit, sim >= target) << "sim=" << sim;
    (fever_hit ? accepted : rejected)++;
  }
  EXPECT_GT(accepted, 0);
  EXPECT_GT(rejected, 0);
  EXPECT_TRUE(saw_exact) << "sweep never produced a similarity of exactly 0.55";
}

TEST(Scoring, ConfirmAndDenyBookkeeping) {
  auto ctx = testkit::toy();
  EngineConfig cfg;
  auto st = make_state(*ctx, cfg);
  EXPECT_TRUE(confirm_symptom(st, *ctx, cfg, "fever", 1.0, EvidenceSource::volunteered).changed);
  EXPECT_DOUBLE_EQ(st.find("Alpha")->score, 0.9);
  EXPECT_DOUBLE_EQ(st.find("Beta")->score, 0.5);
  EXPECT_EQ(st.find("Gamma")->score, 0.0);
  EXPECT_FALSE(confirm_symptom(st, *ctx, cfg, "fever", 1.0, EvidenceSource::volunteered).changed);  // idempotent
  confirm_symptom(st, *ctx, cfg, "cough", 0.6, EvidenceSource::volunteered);
  EXPECT_DOUBLE_EQ(st.find("Alpha")->score, 0.9 + 0.36);
  EXPECT_DOUBLE_EQ(st.find("Gamma")->score, 0.42);
  deny_symptom(st, *ctx, cfg, "rash");
  EXPECT_DOUBLE_EQ(st.find("Alpha")->score, 0.9 + 0.36 - 0.24);
  EXPECT_DOUBLE_EQ(st.find("Alpha")->penalty, 0.24);
  EXPECT_DOUBLE_EQ(st.find("Gamma")->score, 0.42 - 0.4);
  EXPECT_EQ(st.find("Alpha")->matched, 2);
  EXPECT_THROW(confirm_symptom(st, *ctx, cfg, "purple elbows", 1.0, EvidenceSource::volunteered), Error);
}

TEST(Scoring, ContradictionRetractsEarlierEvidence) {
  auto ctx = testkit::toy();
  EngineConfig cfg;
  auto st = make_state(*ctx, cfg);
  deny_symptom(st, *ctx, cfg, "wheeze");
  auto out = confirm_symptom(st, *ctx, cfg, "wheeze", 1.0, EvidenceSource::answered_yes);
  EXPECT_TRUE(out.contradiction);
  EXPECT_DOUBLE_EQ(st.find("Gamma")->score, 0.9);
  EXPECT_DOUBLE_EQ(st.find("Gamma")->penalty, 0.0);
  EXPECT_FALSE(st.denied.count("wheeze"));
  out = deny_symptom(st, *ctx, cfg, "wheeze");
  EXPECT_TRUE(out.contradiction);
  EXPECT_NEAR(st.find("Gamma")->score, -0.72, 1e-12);
  EXPECT_EQ(st.find("Gamma")->matched, 0);
}

TEST(Ranking, HybridScoreAndOrder) {
  auto ctx = testkit::toy();
  EngineConfig cfg;
  auto st = make_state(*ctx, cfg);
  for (const auto& h : st.hypotheses) EXPECT_EQ(h.rank_score, 0.0);
  EXPECT_EQ(st.hypotheses.front().disease, "Alpha");  // name order on an all-zero start
  confirm_symptom(st, *ctx, cfg, "wheeze", 1.0, EvidenceSource::volunteered);
  confirm_symptom(st, *ctx, cfg, "cough", 1.0, EvidenceSource::volunteered);
  EXPECT_EQ(st.hypotheses.front().disease, "Gamma");
  const double max_local = st.find("Gamma")->score;
  for (const auto& h : st.hypotheses) {
    const double local = std::max(0.0, h.score) / max_local;
    EXPECT_NEAR(h.rank_score, 0.7 * h.global_similarity + 0.3 * local, 1e-12);
    EXPECT_NEAR(h.confidence, disease_confidence(h.score, h.matched, h.penalty), 1e-15);
  }
  for (std::size_t i = 1; i < st.hypotheses.size(); ++i)
    EXPECT_GE(st.hypotheses[i - 1].rank_score, st.hypotheses[i].rank_score);
}

TEST(Ranking, GlobalSimilarityIsCentroidCosine) {
  auto ctx = testkit::toy();
  EngineConfig cfg;
  auto st = make_state(*ctx, cfg);
  confirm_symptom(st, *ctx, cfg, "fever", 1.0, EvidenceSource::volunteered);
  confirm_symptom(st, *ctx, cfg, "rash", 1.0, EvidenceSource::volunteered);
  auto mean = [](std::vector<std::string> names) {
    std::vector<double> c(256, 0.0);
    for (auto& n : names) {
      auto v = embed_text(n);
      for (int i = 0; i < 256; ++i) c[i] += v.values[i] / names.size();
    }
    return EmbeddingVector(c);
  };
  const auto evidence = mean({"fever", "rash"});
  EXPECT_NEAR(st.find("Gamma")->global_similarity,
              cosine_similarity(evidence, mean({"cough", "wheeze", "rash"})), 1e-12);
  EXPECT_NEAR(st.find("Alpha")->global_similarity,
              cosine_similarity(evidence, mean({"fever", "cough", "rash"})), 1e-12);
}

TEST(Config, Validation) {
  EngineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.global_weight = 0.6;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.sim_threshold = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.max_questions = 5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.confidence_early_stop = 1.5;
  EXPECT_THROW(c.validate(), Error);
}
