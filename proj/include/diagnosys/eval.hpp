#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "diagnosys/consultation.hpp"

namespace diagnosys {

// std distributions are implementation-defined; these draw straight from the
// engine's raw output so case generation is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return x % n;
  }

  /// Uniform integer in [lo, hi].
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

  /// Uniform real in [lo, hi).
  double real(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct SimCase {
  std::string true_disease;
  std::vector<std::string> symptom_pool;  // canonicals the patient has
  std::vector<std::string> opening_phrases;
  std::map<std::string, std::optional<double>> test_values;  // test id -> reported value
  std::uint64_t seed = 0;

  bool has(const std::string& canonical) const {
    return std::find(symptom_pool.begin(), symptom_pool.end(), canonical) != symptom_pool.end();
  }
  std::string opening_text() const {
    if (opening_phrases.empty()) return {};
    std::string s = "I have been having " + opening_phrases.front();
    for (std::size_t i = 1; i < opening_phrases.size(); ++i)
      s += (i + 1 == opening_phrases.size() ? " and " : ", ") + opening_phrases[i];
    return s + ".";
  }
  bool operator==(const SimCase&) const = default;
};

namespace detail {

inline double satisfying_value(const TestCriterion& c, Rng& rng) {
  const double t = c.threshold;
  switch (c.comparator) {
    case Comparator::less:
    case Comparator::less_equal: return t > 0 ? t * rng.real(0.4, 0.9) : t - rng.real(1.0, 10.0);
    case Comparator::greater:
    case Comparator::greater_equal: return t > 0 ? t * rng.real(1.15, 2.0) : t + rng.real(1.0, 1000.0);
  }
  return t;
}

/// A value on the failing side of every given criterion (all share one test id).
inline double failing_value(const std::vector<const TestCriterion*>& cs, Rng& rng) {
  double lo = -1e300, hi = 1e300;
  for (const auto* c : cs) {
    if (c->comparator == Comparator::less || c->comparator == Comparator::less_equal) lo = std::max(lo, c->threshold);
    else hi = std::min(hi, c->threshold);
  }
  if (hi < 1e300 && lo > -1e300) return (lo + hi) / 2.0;
  if (lo > -1e300) return lo > 0 ? lo * rng.real(1.3, 2.5) : lo + rng.real(1.0, 10.0);
  return hi > 0 ? hi * rng.real(0.1, 0.7) : hi;
}

}  // namespace detail

inline constexpr int kDefaultPerDisease = 6;

/// Synthetic patients: `per_disease` cases for every disease, in disease order.
/// Pool size is uniform in [max(4, min_symptoms - 2), profile size] with the
/// default min_symptoms; 2 or 3 pool symptoms are volunteered up front, each
/// under a randomly chosen declared phrase.
inline std::vector<SimCase> generate_cases(const KnowledgeBase& kb, int per_disease = kDefaultPerDisease,
                                           std::uint64_t seed = 42) {
  if (per_disease < 1) throw Error(ErrorCode::invalid_config, "per_disease must be >= 1");
  const int min_pool_floor = std::max(4, EngineConfig{}.min_symptoms - 2);
  std::map<std::string, std::vector<const TestCriterion*>> by_test;
  for (const auto& d : kb.diseases())
    for (const auto& t : d.tests) by_test[t.test_id].push_back(&t);

  std::vector<SimCase> cases;
  std::uint64_t counter = 0;
  for (const auto& d : kb.diseases()) {
    for (int i = 0; i < per_disease; ++i) {
      SimCase c;
      c.true_disease = d.name;
      c.seed = splitmix64(seed ^ splitmix64(++counter));
      Rng rng(c.seed);
      const int profile = static_cast<int>(d.symptoms.size());
      const int size = rng.between(std::min(min_pool_floor, profile), profile);
      std::vector<const SymptomEntry*> symptoms;
      for (const auto& s : d.symptoms) symptoms.push_back(&s);
      rng.shuffle(symptoms);
      symptoms.resize(static_cast<std::size_t>(size));
      const int opening = std::min(size, rng.between(2, 3));
      for (int j = 0; j < opening; ++j) {
        const auto& s = *symptoms[static_cast<std::size_t>(j)];
        const auto pick = rng.below(s.synonyms.size() + 1);
        c.opening_phrases.push_back(pick == 0 ? s.canonical : s.synonyms[pick - 1]);
      }
      for (const auto* s : symptoms) c.symptom_pool.push_back(s->canonical);
      std::sort(c.symptom_pool.begin(), c.symptom_pool.end());
      for (const auto& [id, criteria] : by_test) {
        const TestCriterion* own = d.find_test(id);
        c.test_values[id] = own ? detail::satisfying_value(*own, rng) : detail::failing_value(criteria, rng);
      }
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

inline nlohmann::json to_json(const SimCase& c) {
  nlohmann::json tests = nlohmann::json::object();
  for (const auto& [id, v] : c.test_values) tests[id] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  return {{"true_disease", c.true_disease},
          {"symptom_pool", c.symptom_pool},
          {"opening_phrases", c.opening_phrases},
          {"test_values", tests},
          {"seed", c.seed}};
}

inline SimCase case_from_json(const nlohmann::json& j) {
  SimCase c;
  c.true_disease = j.at("true_disease").get<std::string>();
  c.symptom_pool = j.at("symptom_pool").get<std::vector<std::string>>();
  c.opening_phrases = j.at("opening_phrases").get<std::vector<std::string>>();
  for (const auto& [id, v] : j.at("test_values").items())
    c.test_values[id] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

inline void write_cases(std::ostream& out, const std::vector<SimCase>& cases) {
  for (const auto& c : cases) out << to_json(c).dump() << "\n";
}

inline std::vector<SimCase> read_cases(std::istream& in) {
  std::vector<SimCase> cases;
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) cases.push_back(case_from_json(nlohmann::json::parse(line)));
  return cases;
}

struct CaseResult {
  std::string true_disease;
  std::vector<std::string> predicted_top3;
  int questions_asked = 0;
  double latency_s = 0.0;
  std::vector<std::string> confirmed_phrases;  // what the patient actually reported
  std::vector<std::string> transcript;          // rendered events, for audits

  std::string top1() const { return predicted_top3.empty() ? std::string() : predicted_top3.front(); }
};

/// Drives one scripted patient through a full consultation in offline mode.
/// The patient answers yes iff the asked symptom is in its pool, reports the
/// case's test values, and says no to risk-factor questions.
inline CaseResult run_consultation(const SimCase& c, std::shared_ptr<const DiagnosticContext> ctx,
                                   const EngineConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Consultation consult(std::move(ctx), config);
  consult.submit_text(c.opening_text());
  while (!consult.report_ready()) {
    const auto& p = consult.pending();
    if (const auto* q = std::get_if<Question>(&p)) {
      consult.answer(q->id, c.has(q->canonical) ? Answer::yes : Answer::no);
    } else if (const auto* t = std::get_if<TestQuestion>(&p)) {
      auto it = c.test_values.find(t->id);
      consult.submit_test(t->id, it != c.test_values.end() ? it->second : std::nullopt);
    } else if (const auto* r = std::get_if<RiskQuestion>(&p)) {
      consult.answer_risk(r->id, Answer::no);
    }
  }
  consult.finish();
  CaseResult r;
  r.true_disease = c.true_disease;
  const auto& s = consult.state();
  for (const auto* h : s.top(3)) r.predicted_top3.push_back(h->disease);
  r.questions_asked = s.questions_asked();
  for (const auto& [_, conf] : s.confirmed) r.confirmed_phrases.push_back(conf.phrase);
  for (const auto& e : s.transcript) r.transcript.push_back(describe(e));
  r.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Runs every case, spreading work across threads; results keep case order.
inline std::vector<CaseResult> run_cases(const std::vector<SimCase>& cases, std::shared_ptr<const DiagnosticContext> ctx,
                                         const EngineConfig& config, unsigned threads = 0) {
  config.validate();
  std::vector<CaseResult> results(cases.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, cases.size())));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < cases.size(); i += threads) results[i] = run_consultation(cases[i], ctx, config);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct ClassCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Metrics {
  std::size_t cases = 0;
  double top1 = 0.0;
  double top3 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double avg_questions = 0.0;
  double avg_latency_s = 0.0;
  std::map<std::string, ClassCounts> confusion;
};

/// One-vs-rest confusion from top-1 predictions; precision and recall are
/// macro-averaged over every label that occurs as truth or prediction, with
/// an undefined ratio counting as 0. F1 combines the macro averages.
inline Metrics compute_metrics(const std::vector<CaseResult>& results) {
  if (results.empty()) throw Error(ErrorCode::empty_results, "no case results");
  Metrics m;
  m.cases = results.size();
  std::set<std::string> labels;
  for (const auto& r : results) {
    labels.insert(r.true_disease);
    labels.insert(r.top1());
  }
  for (const auto& l : labels) m.confusion[l] = {};
  int hit1 = 0, hit3 = 0;
  double questions = 0.0, latency = 0.0;
  for (const auto& r : results) {
    const auto pred = r.top1();
    if (pred == r.true_disease) ++hit1;
    if (std::find(r.predicted_top3.begin(), r.predicted_top3.end(), r.true_disease) != r.predicted_top3.end()) ++hit3;
    questions += r.questions_asked;
    latency += r.latency_s;
    for (auto& [label, counts] : m.confusion) {
      const bool truth = label == r.true_disease, predicted = label == pred;
      if (truth && predicted) ++counts.tp;
      else if (predicted) ++counts.fp;
      else if (truth) ++counts.fn;
      else ++counts.tn;
    }
  }
  const double n = static_cast<double>(results.size());
  m.top1 = hit1 / n;
  m.top3 = hit3 / n;
  m.avg_questions = questions / n;
  m.avg_latency_s = latency / n;
  double p = 0.0, rc = 0.0;
  for (const auto& [_, c] : m.confusion) {
    p += c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    rc += c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  }
  m.precision = p / static_cast<double>(m.confusion.size());
  m.recall = rc / static_cast<double>(m.confusion.size());
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// Stratified fold assignment: each disease's cases are shuffled with the seed,
/// the groups are concatenated in disease order and position i goes to fold i mod k.
inline std::vector<int> assign_folds(const std::vector<SimCase>& cases, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::invalid_config, "k must be >= 2");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cases.size(); ++i) groups[cases[i].true_disease].push_back(i);
  Rng rng(splitmix64(seed));
  std::vector<int> fold(cases.size(), 0);
  std::size_t pos = 0;
  for (auto& [_, idx] : groups) {
    rng.shuffle(idx);
    for (auto i : idx) fold[i] = static_cast<int>(pos++ % static_cast<std::size_t>(k));
  }
  return fold;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct FoldReport {
  int fold = 0;
  std::size_t size = 0;
  Metrics metrics;
};

struct KFoldReport {
  std::vector<FoldReport> folds;
  std::vector<CaseResult> results;  // case order
  std::vector<int> assignment;
  Metrics overall;
  Summary top1, top3, precision, recall, f1, avg_questions;
};

inline KFoldReport kfold_from_results(std::vector<CaseResult> results, std::vector<int> assignment, int k) {
  KFoldReport rep;
  std::vector<double> t1, t3, p, r, f, q;
  for (int f_ = 0; f_ < k; ++f_) {
    std::vector<CaseResult> part;
    for (std::size_t i = 0; i < results.size(); ++i)
      if (assignment[i] == f_) part.push_back(results[i]);
    if (part.empty()) continue;
    FoldReport fr{f_ + 1, part.size(), compute_metrics(part)};
    t1.push_back(fr.metrics.top1);
    t3.push_back(fr.metrics.top3);
    p.push_back(fr.metrics.precision);
    r.push_back(fr.metrics.recall);
    f.push_back(fr.metrics.f1);
    q.push_back(fr.metrics.avg_questions);
    rep.folds.push_back(std::move(fr));
  }
  rep.top1 = summarize(t1);
  rep.top3 = summarize(t3);
  rep.precision = summarize(p);
  rep.recall = summarize(r);
  rep.f1 = summarize(f);
  rep.avg_questions = summarize(q);
  rep.overall = compute_metrics(results);
  rep.results = std::move(results);
  rep.assignment = std::move(assignment);
  return rep;
}

/// The engine has no trained parameters, so each case is consulted once and
/// the folds partition the evaluation.
inline KFoldReport run_kfold(const std::vector<SimCase>& cases, std::shared_ptr<const DiagnosticContext> ctx,
                             const EngineConfig& config, int k = 5, std::uint64_t seed = 42, unsigned threads = 0) {
  auto assignment = assign_folds(cases, k, seed);
  return kfold_from_results(run_cases(cases, std::move(ctx), config, threads), std::move(assignment), k);
}

struct AblationConfig {
  std::string label;
  EngineConfig config;
};

struct AblationRow {
  AblationConfig config;
  Metrics metrics;
};

inline std::vector<AblationConfig> ablation_grid(std::string_view name) {
  auto make = [](std::string label, int min_q, int min_s, std::optional<double> conf, int max_q, double sim,
                 double g = 0.7, double l = 0.3) {
    EngineConfig c;
    c.min_questions = min_q;
    c.min_symptoms = min_s;
    c.confidence_early_stop = conf;
    c.max_questions = max_q;
    c.sim_threshold = sim;
    c.global_weight = g;
    c.local_weight = l;
    return AblationConfig{std::move(label), c};
  };
  if (name == "table5") {
    const double c = 0.70;
    return {make("Baseline", 10, 8, c, 20, 0.55), make("MinQ=5", 5, 8, c, 20, 0.55),
            make("MinQ=15", 15, 8, c, 20, 0.55),  make("MaxQ=10", 10, 8, c, 10, 0.55),
            make("MaxQ=15", 10, 8, c, 15, 0.55),  make("MinS=2", 10, 2, c, 20, 0.55),
            make("MinS=4", 10, 4, c, 20, 0.55),   make("MinS=6", 10, 6, c, 20, 0.55),
            make("Conf=60", 10, 8, 0.60, 20, 0.55), make("Conf=80", 10, 8, 0.80, 20, 0.55),
            make("Sim=0.45", 10, 8, c, 20, 0.45), make("Sim=0.75", 10, 8, c, 20, 0.75),
            make("Sim=0.85", 10, 8, c, 20, 0.85)};
  }
  if (name == "table6") {
    const std::optional<double> off;
    return {make("Baseline", 10, 8, off, 20, 0.55), make("MaxQ=10", 10, 8, off, 10, 0.55),
            make("MaxQ=15", 10, 8, off, 15, 0.55),  make("MinS=2", 10, 2, off, 20, 0.55),
            make("MinS=4", 10, 4, off, 20, 0.55),   make("MinS=6", 10, 6, off, 20, 0.55),
            make("Sim=0.45", 10, 8, off, 20, 0.45), make("Sim=0.75", 10, 8, off, 20, 0.75),
            make("Sim=0.85", 10, 8, off, 20, 0.85)};
  }
  if (name == "table7") {
    const std::optional<double> off;
    return {make("Local_Only", 10, 8, off, 20, 0.55, 0.0, 1.0), make("Global_Only", 10, 8, off, 20, 0.55, 1.0, 0.0),
            make("Hybrid_70_30", 10, 8, off, 20, 0.55, 0.7, 0.3), make("Hybrid_50_50", 10, 8, off, 20, 0.55, 0.5, 0.5)};
  }
  throw Error(ErrorCode::empty_grid, "unknown grid '" + std::string(name) + "'");
}

inline std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& grid, const std::vector<SimCase>& cases,
                                             std::shared_ptr<const DiagnosticContext> ctx, unsigned threads = 0) {
  if (grid.empty()) throw Error(ErrorCode::empty_grid, "ablation grid is empty");
  std::vector<AblationRow> rows;
  for (const auto& g : grid) rows.push_back({g, compute_metrics(run_cases(cases, ctx, g.config, threads))});
  return rows;
}

inline constexpr std::string_view kMetricsCsvHeader =
    "config,min_q,min_s,conf,max_q,sim,g_w,l_w,top1,top3,precision,recall,f1,avg_q,latency_s";

inline std::string metrics_csv_row(const std::string& label, const EngineConfig& c, const Metrics& m) {
  std::ostringstream out;
  out << csv_field(label) << ',' << c.min_questions << ',' << c.min_symptoms << ','
      << fixed4(c.confidence_early_stop.value_or(0.0)) << ',' << c.max_questions << ',' << fixed4(c.sim_threshold)
      << ',' << fixed4(c.global_weight) << ',' << fixed4(c.local_weight) << ',' << fixed4(m.top1) << ','
      << fixed4(m.top3) << ',' << fixed4(m.precision) << ',' << fixed4(m.recall) << ',' << fixed4(m.f1) << ','
      << fixed4(m.avg_questions) << ',' << fixed4(m.avg_latency_s);
  return out.str();
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out(kMetricsCsvHeader);
  out += "\n";
  for (const auto& r : rows) out += metrics_csv_row(r.config.label, r.config.config, r.metrics) + "\n";
  return out;
}

inline std::string kfold_csv(const KFoldReport& rep, const EngineConfig& config) {
  std::string out(kMetricsCsvHeader);
  out += "\n";
  for (const auto& f : rep.folds) out += metrics_csv_row("fold" + std::to_string(f.fold), config, f.metrics) + "\n";
  return out;
}

// ---- TF-IDF + multinomial Naive Bayes baseline ----

/// Smoothed TF-IDF: idf = ln((1 + D) / (1 + df)) + 1 on raw term counts,
/// rows L2-normalized. The vocabulary is fixed at fit time.
class TfidfVectorizer {
 public:
  void fit(const std::vector<std::vector<std::string>>& docs) {
    std::map<std::string, int> df;
    for (const auto& d : docs) {
      std::set<std::string> uniq(d.begin(), d.end());
      for (const auto& t : uniq) ++df[t];
    }
    vocab_.clear();
    idf_.clear();
    const double n = static_cast<double>(docs.size());
    for (const auto& [term, count] : df) {
      vocab_[term] = idf_.size();
      idf_.push_back(std::log((1.0 + n) / (1.0 + count)) + 1.0);
    }
  }

  std::vector<double> transform(const std::vector<std::string>& doc) const {
    std::vector<double> row(idf_.size(), 0.0);
    for (const auto& t : doc)
      if (auto it = vocab_.find(t); it != vocab_.end()) row[it->second] += 1.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] *= idf_[i];
      norm += row[i] * row[i];
    }
    if (norm > 0.0)
      for (double& x : row) x /= std::sqrt(norm);
    return row;
  }

  const std::map<std::string, std::size_t>& vocabulary() const noexcept { return vocab_; }
  const std::vector<double>& idf() const noexcept { return idf_; }

 private:
  std::map<std::string, std::size_t> vocab_;
  std::vector<double> idf_;
};

inline std::vector<std::string> tokenize_document(const std::vector<std::string>& phrases) {
  return normalize_input(join(phrases, " "));
}

struct NaiveBayesModel {
  TfidfVectorizer vectorizer;
  std::vector<std::string> classes;
  std::vector<double> log_prior;
  std::vector<std::vector<double>> log_likelihood;  // [class][term]

  /// Classes by descending posterior, ties by name.
  std::vector<std::string> rank(const std::vector<std::string>& phrases) const {
    const auto x = vectorizer.transform(tokenize_document(phrases));
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      double s = log_prior[c];
      for (std::size_t t = 0; t < x.size(); ++t) s += x[t] * log_likelihood[c][t];
      scored.emplace_back(s, classes[c]);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& [_, name] : scored) out.push_back(name);
    return out;
  }
};

struct LabeledDocument {
  std::string label;
  std::vector<std::string> phrases;
};

/// Multinomial NB with Laplace smoothing 1 over TF-IDF masses.
inline NaiveBayesModel nb_baseline_train(const std::vector<LabeledDocument>& train) {
  std::set<std::string> labels;
  for (const auto& d : train) labels.insert(d.label);
  if (labels.size() < 2) throw Error(ErrorCode::degenerate_training_set, "need at least two classes");
  NaiveBayesModel m;
  std::vector<std::vector<std::string>> docs;
  for (const auto& d : train) docs.push_back(tokenize_document(d.phrases));
  m.vectorizer.fit(docs);
  m.classes.assign(labels.begin(), labels.end());
  const std::size_t v = m.vectorizer.idf().size();
  std::vector<std::vector<double>> mass(m.classes.size(), std::vector<double>(v, 0.0));
  std::vector<double> count(m.classes.size(), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto c = static_cast<std::size_t>(std::find(m.classes.begin(), m.classes.end(), train[i].label) - m.classes.begin());
    const auto row = m.vectorizer.transform(docs[i]);
    for (std::size_t t = 0; t < v; ++t) mass[c][t] += row[t];
    count[c] += 1.0;
  }
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    m.log_prior.push_back(std::log(count[c] / static_cast<double>(train.size())));
    double total = 0.0;
    for (double x : mass[c]) total += x;
    std::vector<double> ll(v);
    for (std::size_t t = 0; t < v; ++t) ll[t] = std::log((mass[c][t] + 1.0) / (total + static_cast<double>(v)));
    m.log_likelihood.push_back(std::move(ll));
  }
  return m;
}

inline std::vector<CaseResult> nb_predict(const NaiveBayesModel& model, const std::vector<LabeledDocument>& test) {
  std::vector<CaseResult> out;
  for (const auto& d : test) {
    CaseResult r;
    r.true_disease = d.label;
    auto ranked = model.rank(d.phrases);
    ranked.resize(std::min<std::size_t>(3, ranked.size()));
    r.predicted_top3 = std::move(ranked);
    out.push_back(std::move(r));
  }
  return out;
}

inline Metrics nb_baseline_eval(const NaiveBayesModel& model, const std::vector<LabeledDocument>& test) {
  return compute_metrics(nb_predict(model, test));
}

/// Documents are the symptom phrases each simulated patient actually reported
/// during its consultation. Trains on k-1 folds, predicts the held-out fold,
/// and pools the held-out predictions.
inline Metrics nb_kfold(const KFoldReport& engine_run, int k) {
  std::vector<CaseResult> pooled;
  for (int f = 0; f < k; ++f) {
    std::vector<LabeledDocument> train, test;
    for (std::size_t i = 0; i < engine_run.results.size(); ++i) {
      LabeledDocument d{engine_run.results[i].true_disease, engine_run.results[i].confirmed_phrases};
      (engine_run.assignment[i] == f ? test : train).push_back(std::move(d));
    }
    if (test.empty()) continue;
    auto part = nb_predict(nb_baseline_train(train), test);
    pooled.insert(pooled.end(), part.begin(), part.end());
  }
  return compute_metrics(pooled);
}

}  // namespace diagnosys
