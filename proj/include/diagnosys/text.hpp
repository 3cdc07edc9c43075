#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace diagnosys {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Fixed stopword list applied to patient input and to lexicon phrases alike.
// Negations, prepositions of place ("behind", "after", "up") and quantity words
// stay in: they carry symptom meaning.
inline constexpr std::array<std::string_view, 40> kStopwords = {
    "a",    "an",   "the",  "and",   "or",    "but",   "is",    "am",
    "are",  "was",  "were", "be",    "been",  "being", "i",     "me",
    "my",   "we",   "our",  "you",   "your",  "it",    "its",   "this",
    "that", "these", "those", "have", "has",  "had",   "do",    "does",
    "did",  "of",   "to",   "in",    "on",    "at",    "for",   "with"};

inline bool is_stopword(std::string_view token) {
  return std::find(kStopwords.begin(), kStopwords.end(), token) != kStopwords.end();
}

/// Lowercase, strip punctuation, split on whitespace, drop stopwords.
/// Apostrophes are removed rather than split on, so "can't" becomes "cant".
inline std::vector<std::string> normalize_input(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !is_stopword(current)) tokens.push_back(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

/// Canonical lexicon key of a phrase: its normalized tokens joined by spaces.
inline std::string phrase_key(std::string_view phrase) {
  return join(normalize_input(phrase), " ");
}

}  // namespace diagnosys
