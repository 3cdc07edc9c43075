#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "diagnosys/error.hpp"
#include "diagnosys/text.hpp"

namespace diagnosys {

enum class Severity { mild, moderate, severe };

enum class Category {
  infectious,
  chronic,
  mental_health,
  other_common,
};

enum class Comparator { greater, greater_equal, less, less_equal };

constexpr std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::mild: return "mild";
    case Severity::moderate: return "moderate";
    case Severity::severe: return "severe";
  }
  return "";
}

constexpr std::string_view to_string(Category c) {
  switch (c) {
    case Category::infectious: return "Infectious Diseases";
    case Category::chronic: return "Chronic Conditions";
    case Category::mental_health: return "Mental Health";
    case Category::other_common: return "Other Common Conditions";
  }
  return "";
}

constexpr std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::greater: return ">";
    case Comparator::greater_equal: return ">=";
    case Comparator::less: return "<";
    case Comparator::less_equal: return "<=";
  }
  return "";
}

inline constexpr std::array<Category, 4> kCategories = {
    Category::infectious, Category::chronic, Category::mental_health, Category::other_common};

/// Default weight for each severity tier: the midpoint used when a symptom
/// line carries no explicit `w=` override.
constexpr double tier_midpoint(Severity s) {
  switch (s) {
    case Severity::mild: return 0.3;
    case Severity::moderate: return 0.6;
    case Severity::severe: return 0.85;
  }
  return 0.0;
}

/// Half-open weight band [lo, hi) of a tier; severe closes at 1.0.
constexpr std::pair<double, double> tier_band(Severity s) {
  switch (s) {
    case Severity::mild: return {0.2, 0.45};
    case Severity::moderate: return {0.45, 0.75};
    case Severity::severe: return {0.75, 1.0};
  }
  return {0.0, 0.0};
}

constexpr bool weight_in_band(Severity s, double w) {
  auto [lo, hi] = tier_band(s);
  return s == Severity::severe ? (w >= lo && w <= hi) : (w >= lo && w < hi);
}

constexpr bool holds(Comparator c, double value, double threshold) {
  switch (c) {
    case Comparator::greater: return value > threshold;
    case Comparator::greater_equal: return value >= threshold;
    case Comparator::less: return value < threshold;
    case Comparator::less_equal: return value <= threshold;
  }
  return false;
}

struct SymptomEntry {
  std::string canonical;
  std::vector<std::string> synonyms;
  double weight = 0.0;
  Severity tier = Severity::moderate;

  bool operator==(const SymptomEntry&) const = default;
};

struct RiskFactor {
  std::string description;
  double weight = 0.0;

  bool operator==(const RiskFactor&) const = default;
};

struct TestCriterion {
  std::string test_id;
  std::string display_name;
  double threshold = 0.0;
  std::string unit;
  Comparator comparator = Comparator::greater;
  bool decisive = false;
  std::string supports_note;

  bool operator==(const TestCriterion&) const = default;
};

struct DiseaseRecord {
  std::string name;
  Category category = Category::infectious;
  std::vector<SymptomEntry> symptoms;
  std::vector<RiskFactor> risk_factors;
  std::vector<TestCriterion> tests;
  std::string management;

  const SymptomEntry* find_symptom(std::string_view canonical) const {
    for (const auto& s : symptoms)
      if (s.canonical == canonical) return &s;
    return nullptr;
  }

  const TestCriterion* find_test(std::string_view test_id) const {
    for (const auto& t : tests)
      if (t.test_id == test_id) return &t;
    return nullptr;
  }

  bool operator==(const DiseaseRecord&) const = default;
};

/// The `specialist:` line of the management section, if any.
inline std::optional<std::string> specialist_of(const DiseaseRecord& d) {
  std::istringstream in(d.management);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (starts_with_ci(t, "specialist:")) return std::string(trim(t.substr(11)));
  }
  return std::nullopt;
}

namespace detail {

inline double parse_real(std::string_view text, std::string_view what) {
  auto t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw Error(ErrorCode::malformed_document, std::string(what) + ": '" + std::string(t) + "'");
  return v;
}

inline std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::optional<Severity> parse_severity(std::string_view s) {
  auto t = to_lower(trim(s));
  if (t == "mild") return Severity::mild;
  if (t == "moderate") return Severity::moderate;
  if (t == "severe") return Severity::severe;
  return std::nullopt;
}

inline std::optional<Category> parse_category(std::string_view s) {
  auto t = to_lower(trim(s));
  for (auto c : kCategories)
    if (to_lower(to_string(c)) == t) return c;
  return std::nullopt;
}

inline SymptomEntry parse_symptom_line(std::string_view line) {
  auto fields = split(line, '|');
  if (fields.size() < 3 || fields.size() > 4)
    throw Error(ErrorCode::malformed_document, "symptom line: '" + std::string(line) + "'");
  SymptomEntry s;
  s.canonical = to_lower(trim(fields[0]));
  if (s.canonical.empty()) throw Error(ErrorCode::malformed_document, "empty symptom name");
  for (const auto& syn : split(fields[1], ';')) {
    auto t = to_lower(trim(syn));
    if (!t.empty()) s.synonyms.push_back(t);
  }
  auto tier = parse_severity(fields[2]);
  if (!tier) throw Error(ErrorCode::malformed_document, "severity tier: '" + fields[2] + "'");
  s.tier = *tier;
  s.weight = tier_midpoint(*tier);
  if (fields.size() == 4) {
    auto w = trim(fields[3]);
    if (!starts_with_ci(w, "w=")) throw Error(ErrorCode::malformed_document, "weight override: '" + std::string(w) + "'");
    s.weight = parse_real(w.substr(2), "weight");
  }
  if (!(s.weight >= 0.2 && s.weight <= 1.0) || !weight_in_band(s.tier, s.weight))
    throw Error(ErrorCode::bad_weight, s.canonical + "=" + format_real(s.weight));
  return s;
}

inline RiskFactor parse_risk_line(std::string_view line) {
  auto fields = split(line, '|');
  if (fields.size() != 2)
    throw Error(ErrorCode::malformed_document, "risk factor line: '" + std::string(line) + "'");
  RiskFactor r;
  r.description = std::string(trim(fields[0]));
  r.weight = parse_real(fields[1], "risk weight");
  if (!(r.weight > 0.0 && r.weight <= 0.5))
    throw Error(ErrorCode::bad_weight, r.description + "=" + format_real(r.weight));
  return r;
}

inline TestCriterion parse_test_line(std::string_view line) {
  static const std::regex criterion_re(R"(^\s*(>=|<=|≥|≤|>|<)\s*([-+0-9.eE]+)\s*(.*?)\s*$)");
  auto fields = split(line, '|');
  if (fields.size() != 5)
    throw Error(ErrorCode::malformed_document, "test line: '" + std::string(line) + "'");
  TestCriterion t;
  t.test_id = to_lower(trim(fields[0]));
  t.display_name = std::string(trim(fields[1]));
  std::smatch m;
  const std::string crit(trim(fields[2]));
  if (!std::regex_match(crit, m, criterion_re))
    throw Error(ErrorCode::malformed_document, "test criterion: '" + crit + "'");
  const auto op = m[1].str();
  if (op == ">") t.comparator = Comparator::greater;
  else if (op == ">=" || op == "≥") t.comparator = Comparator::greater_equal;
  else if (op == "<") t.comparator = Comparator::less;
  else t.comparator = Comparator::less_equal;
  t.threshold = parse_real(m[2].str(), "threshold");
  t.unit = m[3].str();
  auto kind = to_lower(trim(fields[3]));
  if (kind == "decisive") t.decisive = true;
  else if (kind != "supportive")
    throw Error(ErrorCode::malformed_document, "test kind: '" + kind + "'");
  t.supports_note = std::string(trim(fields[4]));
  if (t.test_id.empty()) throw Error(ErrorCode::malformed_document, "empty test id");
  return t;
}

}  // namespace detail

/// Parses one sectioned disease document:
///
///     name: Dengue Fever
///     category: Infectious Diseases
///     == SYMPTOMS ==
///     fever | high temperature; pyrexia | moderate
///     pain behind the eyes | retro-orbital pain | severe | w=0.9
///     == RISK FACTORS ==
///     residence in a dengue-endemic area | 0.3
///     == TESTS ==
///     ns1_antigen | NS1 antigen | >= 1.1 index | decisive | note
///     == MANAGEMENT ==
///     free text; a `specialist:` line names the referral
///
/// Lines starting with `#` are comments outside the management section.
inline DiseaseRecord parse_disease_document(std::string_view text) {
  static const std::regex header_re(R"(^==\s*(.+?)\s*==$)");
  static const std::array<std::string_view, 4> required = {"SYMPTOMS", "RISK FACTORS", "TESTS",
                                                           "MANAGEMENT"};
  DiseaseRecord d;
  std::optional<std::string> name, category;
  std::string section;
  std::set<std::string> seen;
  std::vector<std::string> management_lines;
  std::set<std::string> phrases;

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line(trim(raw));
    std::smatch m;
    if (std::regex_match(line, m, header_re)) {
      section = to_lower(m[1].str());
      std::transform(section.begin(), section.end(), section.begin(), ::toupper);
      if (std::find(required.begin(), required.end(), section) == required.end())
        throw Error(ErrorCode::malformed_document, "unknown section '" + m[1].str() + "'");
      if (!seen.insert(section).second)
        throw Error(ErrorCode::malformed_document, "repeated section '" + section + "'");
      continue;
    }
    if (section == "MANAGEMENT") {
      management_lines.push_back(line);
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    if (section.empty()) {
      auto colon = line.find(':');
      if (colon == std::string::npos)
        throw Error(ErrorCode::malformed_document, "preamble line: '" + line + "'");
      auto key = to_lower(trim(std::string_view(line).substr(0, colon)));
      auto value = std::string(trim(std::string_view(line).substr(colon + 1)));
      if (key == "name") name = value;
      else if (key == "category") category = value;
      else throw Error(ErrorCode::malformed_document, "preamble key '" + key + "'");
    } else if (section == "SYMPTOMS") {
      auto s = detail::parse_symptom_line(line);
      if (d.find_symptom(s.canonical)) throw Error(ErrorCode::duplicate_symptom, s.canonical);
      if (!phrases.insert(s.canonical).second) throw Error(ErrorCode::duplicate_symptom, s.canonical);
      for (const auto& syn : s.synonyms) {
        if (syn == s.canonical || !phrases.insert(syn).second)
          throw Error(ErrorCode::duplicate_symptom, syn);
      }
      d.symptoms.push_back(std::move(s));
    } else if (section == "RISK FACTORS") {
      d.risk_factors.push_back(detail::parse_risk_line(line));
    } else if (section == "TESTS") {
      auto t = detail::parse_test_line(line);
      if (d.find_test(t.test_id)) throw Error(ErrorCode::malformed_document, "duplicate test " + t.test_id);
      d.tests.push_back(std::move(t));
    }
  }
  for (auto req : required)
    if (!seen.count(std::string(req))) throw Error(ErrorCode::missing_section, std::string(req));
  if (!name || name->empty()) throw Error(ErrorCode::malformed_document, "name");
  if (!category) throw Error(ErrorCode::malformed_document, "category");
  auto cat = detail::parse_category(*category);
  if (!cat) throw Error(ErrorCode::malformed_document, "category '" + *category + "'");
  d.name = *name;
  d.category = *cat;
  while (!management_lines.empty() && management_lines.back().empty()) management_lines.pop_back();
  auto first = std::find_if(management_lines.begin(), management_lines.end(),
                            [](const std::string& l) { return !l.empty(); });
  management_lines.erase(management_lines.begin(), first);
  d.management = join(management_lines, "\n");
  return d;
}

/// Emits the canonical document form; parse_disease_document reads it back
/// into an equal record.
inline std::string dump_disease_document(const DiseaseRecord& d) {
  std::ostringstream out;
  out << "name: " << d.name << "\n";
  out << "category: " << to_string(d.category) << "\n\n";
  out << "== SYMPTOMS ==\n";
  for (const auto& s : d.symptoms) {
    out << s.canonical << " | " << join(s.synonyms, "; ") << " | " << to_string(s.tier);
    if (s.weight != tier_midpoint(s.tier)) out << " | w=" << detail::format_real(s.weight);
    out << "\n";
  }
  out << "\n== RISK FACTORS ==\n";
  for (const auto& r : d.risk_factors) out << r.description << " | " << detail::format_real(r.weight) << "\n";
  out << "\n== TESTS ==\n";
  for (const auto& t : d.tests) {
    out << t.test_id << " | " << t.display_name << " | " << to_string(t.comparator) << " "
        << detail::format_real(t.threshold);
    if (!t.unit.empty()) out << " " << t.unit;
    out << " | " << (t.decisive ? "decisive" : "supportive") << " | " << t.supports_note << "\n";
  }
  out << "\n== MANAGEMENT ==\n" << d.management << "\n";
  return out.str();
}

struct SymptomRef {
  std::string disease;
  std::string canonical;

  auto operator<=>(const SymptomRef&) const = default;
};

/// A lexicon entry groups every declared phrase sharing one normalized token key.
struct LexiconEntry {
  std::string phrase;                   // first declared spelling
  std::vector<std::string> canonicals;  // sorted, unique
};

class KnowledgeBase {
 public:
  using SynonymMap = std::map<std::string, std::vector<SymptomRef>>;

  KnowledgeBase() = default;

  explicit KnowledgeBase(std::vector<DiseaseRecord> diseases,
                         std::map<std::string, std::string> documents = {})
      : diseases_(std::move(diseases)), documents_(std::move(documents)) {
    std::sort(diseases_.begin(), diseases_.end(),
              [](const auto& a, const auto& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < diseases_.size(); ++i)
      if (diseases_[i].name == diseases_[i - 1].name)
        throw Error(ErrorCode::duplicate_disease, diseases_[i].name);
    std::set<std::string> canon;
    for (std::size_t i = 0; i < diseases_.size(); ++i) {
      const auto& d = diseases_[i];
      for (const auto& s : d.symptoms) {
        canon.insert(s.canonical);
        listing_[s.canonical].push_back(i);
        add_phrase(s.canonical, {d.name, s.canonical});
        for (const auto& syn : s.synonyms) add_phrase(syn, {d.name, s.canonical});
      }
    }
    canonicals_.assign(canon.begin(), canon.end());
    for (auto& [_, refs] : synonym_map_) std::sort(refs.begin(), refs.end());
    for (auto& [_, e] : lexicon_) {
      std::sort(e.canonicals.begin(), e.canonicals.end());
      e.canonicals.erase(std::unique(e.canonicals.begin(), e.canonicals.end()), e.canonicals.end());
    }
  }

  const std::vector<DiseaseRecord>& diseases() const noexcept { return diseases_; }
  std::size_t size() const noexcept { return diseases_.size(); }

  const DiseaseRecord* find(std::string_view name) const {
    auto it = std::lower_bound(diseases_.begin(), diseases_.end(), name,
                               [](const DiseaseRecord& d, std::string_view n) { return d.name < n; });
    return (it != diseases_.end() && it->name == name) ? &*it : nullptr;
  }

  const DiseaseRecord& at(std::string_view name) const {
    if (auto* d = find(name)) return *d;
    throw Error(ErrorCode::unknown_disease, std::string(name));
  }

  /// Every declared phrase (canonical or synonym, lowercase) to the
  /// (disease, canonical) pairs that declare it.
  const SynonymMap& synonym_map() const noexcept { return synonym_map_; }

  /// Normalized token key to the canonicals reachable through it.
  const std::map<std::string, LexiconEntry>& lexicon() const noexcept { return lexicon_; }

  /// All distinct canonical symptom names, sorted.
  const std::vector<std::string>& canonical_symptoms() const noexcept { return canonicals_; }

  /// Indices (into diseases()) of diseases whose profile lists the canonical.
  const std::vector<std::size_t>& diseases_listing(std::string_view canonical) const {
    static const std::vector<std::size_t> none;
    auto it = listing_.find(std::string(canonical));
    return it == listing_.end() ? none : it->second;
  }

  /// Source text of each disease document, keyed by disease name.
  const std::map<std::string, std::string>& documents() const noexcept { return documents_; }

  std::map<Category, int> category_histogram() const {
    std::map<Category, int> h;
    for (auto c : kCategories) h[c] = 0;
    for (const auto& d : diseases_) ++h[d.category];
    return h;
  }

 private:
  void add_phrase(const std::string& phrase, SymptomRef ref) {
    synonym_map_[phrase].push_back(ref);
    auto key = phrase_key(phrase);
    if (key.empty()) return;
    auto [it, inserted] = lexicon_.try_emplace(key, LexiconEntry{phrase, {}});
    it->second.canonicals.push_back(ref.canonical);
  }

  std::vector<DiseaseRecord> diseases_;
  std::map<std::string, std::string> documents_;
  SynonymMap synonym_map_;
  std::map<std::string, LexiconEntry> lexicon_;
  std::map<std::string, std::vector<std::size_t>> listing_;
  std::vector<std::string> canonicals_;
};

/// Type-level invariants a loaded record must satisfy; returns one message
/// per violation.
inline std::vector<std::string> validate_record(const DiseaseRecord& d) {
  std::vector<std::string> issues;
  auto fail = [&](const std::string& m) { issues.push_back(d.name + ": " + m); };
  if (d.symptoms.size() < 5) fail("fewer than 5 symptoms");
  if (d.tests.empty()) fail("no diagnostic tests");
  if (!specialist_of(d)) fail("management section names no specialist");
  for (const auto& s : d.symptoms) {
    if (!weight_in_band(s.tier, s.weight)) fail("weight outside tier band: " + s.canonical);
    for (const auto& syn : s.synonyms)
      if (syn.empty() || syn == s.canonical) fail("bad synonym of " + s.canonical);
  }
  for (const auto& r : d.risk_factors)
    if (!(r.weight > 0.0 && r.weight <= 0.5)) fail("risk weight out of range: " + r.description);
  for (const auto& t : d.tests)
    if (!std::isfinite(t.threshold)) fail("non-finite threshold: " + t.test_id);
  return issues;
}

inline std::vector<std::string> validate_knowledge_base(const KnowledgeBase& kb) {
  std::vector<std::string> issues;
  for (const auto& d : kb.diseases()) {
    auto r = validate_record(d);
    issues.insert(issues.end(), r.begin(), r.end());
  }
  for (const auto& d : kb.diseases())
    for (const auto& s : d.symptoms) {
      auto it = kb.synonym_map().find(s.canonical);
      if (it == kb.synonym_map().end()) issues.push_back("synonym map misses " + s.canonical);
    }
  return issues;
}

/// Loads every `*.disease.txt` in `dir`, ordered by disease name.
inline KnowledgeBase load_knowledge_base(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io_error, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 12 && name.ends_with(".disease.txt"))
      files.push_back(entry.path());
  }
  if (files.empty()) throw Error(ErrorCode::empty_knowledge_base, dir.string());
  std::sort(files.begin(), files.end());

  std::vector<DiseaseRecord> records;
  std::map<std::string, std::string> documents;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, f.string());
    std::stringstream buf;
    buf << in.rdbuf();
    DiseaseRecord rec;
    try {
      rec = parse_disease_document(buf.str());
    } catch (const Error& e) {
      throw Error(e.code(), f.filename().string() + ": " + e.detail());
    }
    if (documents.count(rec.name)) throw Error(ErrorCode::duplicate_disease, rec.name);
    auto issues = validate_record(rec);
    if (!issues.empty()) throw Error(ErrorCode::malformed_document, f.filename().string() + ": " + issues.front());
    documents.emplace(rec.name, buf.str());
    records.push_back(std::move(rec));
  }
  return KnowledgeBase(std::move(records), std::move(documents));
}

inline std::set<std::string> symptom_set(const DiseaseRecord& d) {
  std::set<std::string> s;
  for (const auto& e : d.symptoms) s.insert(e.canonical);
  return s;
}

/// Intersection over union of canonical symptom names; 1 when both are empty.
inline double jaccard_symptom_similarity(const DiseaseRecord& a, const DiseaseRecord& b) {
  const auto sa = symptom_set(a);
  const auto sb = symptom_set(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& s : sa) inter += sb.count(s);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct SimilarityMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
};

inline SimilarityMatrix similarity_matrix(const KnowledgeBase& kb) {
  SimilarityMatrix m;
  const auto& ds = kb.diseases();
  for (const auto& d : ds) m.names.push_back(d.name);
  m.values.assign(ds.size(), std::vector<double>(ds.size(), 0.0));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    m.values[i][i] = 1.0;
    for (std::size_t j = i + 1; j < ds.size(); ++j)
      m.values[i][j] = m.values[j][i] = jaccard_symptom_similarity(ds[i], ds[j]);
  }
  return m;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Header row of names, then one row per disease led by its name; 4-decimal cells.
inline std::string similarity_csv(const SimilarityMatrix& m) {
  std::string out = "disease";
  for (const auto& n : m.names) out += "," + csv_field(n);
  out += "\n";
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    out += csv_field(m.names[i]);
    for (double v : m.values[i]) out += "," + fixed4(v);
    out += "\n";
  }
  return out;
}

}  // namespace diagnosys
