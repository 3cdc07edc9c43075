#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diagnosys/error.hpp"

namespace diagnosys {

inline constexpr std::size_t kEmbeddingDim = 256;

/// Dense embedding. The builtin embedder always yields kEmbeddingDim values
/// that are either all zero or unit-norm.
struct EmbeddingVector {
  std::vector<double> values;

  EmbeddingVector() : values(kEmbeddingDim, 0.0) {}
  explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dimension() const noexcept { return values.size(); }
  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
  bool is_zero() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  }
  bool operator==(const EmbeddingVector&) const = default;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Lowercase, map every non-alphanumeric byte to a space, collapse space runs, trim.
inline std::string normalize_for_embedding(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

/// Hashed character-trigram embedding: count each trigram of the normalized
/// text into bucket fnv1a64(trigram) mod 256, then L2-normalize.
inline EmbeddingVector embed_text(std::string_view text) {
  const auto norm = normalize_for_embedding(text);
  EmbeddingVector v;
  if (norm.size() < 3) return v;
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i)
    v.values[fnv1a64(std::string_view(norm).substr(i, 3)) % kEmbeddingDim] += 1.0;
  const double n = v.norm();
  for (double& x : v.values) x /= n;
  return v;
}

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw Error(ErrorCode::dimension_mismatch,
                std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

/// dot(a,b)/(|a||b|), defined as 0 when either vector has zero norm.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  const double d = dot(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

/// Source of embeddings. Implementations must return identical vectors for
/// identical text.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string mode() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;

  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
  }
};

class BuiltinEmbedder final : public EmbeddingProvider {
 public:
  std::string mode() const override { return "builtin-deterministic"; }
  EmbeddingVector embed(std::string_view text) const override { return embed_text(text); }
};

struct Chunk {
  std::string text;
  std::size_t start_offset = 0;
  std::string source_id;

  bool operator==(const Chunk&) const = default;
};

/// Fixed-size windows starting at multiples of (size - overlap). The last
/// window is the first one reaching the end of the text.
inline std::vector<Chunk> chunk_document(std::string_view text, std::size_t size = 1000,
                                         std::size_t overlap = 200, std::string_view source_id = {}) {
  if (size == 0 || overlap >= size)
    throw Error(ErrorCode::bad_chunk_params,
                "size=" + std::to_string(size) + " overlap=" + std::to_string(overlap));
  std::vector<Chunk> chunks;
  const std::size_t step = size - overlap;
  for (std::size_t start = 0; start < text.size(); start += step) {
    const std::size_t end = std::min(start + size, text.size());
    chunks.push_back({std::string(text.substr(start, end - start)), start, std::string(source_id)});
    if (end == text.size()) break;
  }
  return chunks;
}

/// Inverse of chunk_document: drop each chunk's leading overlap after the first.
inline std::string stitch_chunks(const std::vector<Chunk>& chunks, std::size_t overlap = 200) {
  std::string out;
  for (std::size_t i = 0; i < chunks.size(); ++i)
    out += i == 0 ? chunks[i].text : chunks[i].text.substr(std::min(overlap, chunks[i].text.size()));
  return out;
}

struct SearchHit {
  std::string key;
  double similarity = 0.0;

  bool operator==(const SearchHit&) const = default;
};

/// Immutable flat index; search is an exact scan.
class VectorIndex {
 public:
  struct Entry {
    std::string key;
    EmbeddingVector vector;
    std::string payload;
  };

  VectorIndex() = default;

  explicit VectorIndex(std::vector<Entry> entries) : entries_(std::move(entries)) {
    std::set<std::string> keys;
    for (const auto& e : entries_) {
      if (!keys.insert(e.key).second) throw Error(ErrorCode::duplicate_key, e.key);
      if (!entries_.empty() && e.vector.dimension() != entries_.front().vector.dimension())
        throw Error(ErrorCode::dimension_mismatch, e.key);
    }
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t dimension() const noexcept {
    return entries_.empty() ? kEmbeddingDim : entries_.front().vector.dimension();
  }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Top-k by cosine, descending; ties by key ascending.
  std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k) const {
    if (entries_.empty()) throw Error(ErrorCode::empty_index, "search on empty index");
    std::vector<SearchHit> hits;
    hits.reserve(entries_.size());
    for (const auto& e : entries_) hits.push_back({e.key, cosine_similarity(query, e.vector)});
    const std::size_t n = std::min(k, hits.size());
    auto better = [](const SearchHit& a, const SearchHit& b) {
      return a.similarity != b.similarity ? a.similarity > b.similarity : a.key < b.key;
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
    hits.resize(n);
    return hits;
  }

  std::vector<SearchHit> search(const EmbeddingProvider& provider, std::string_view query,
                                std::size_t k) const {
    return search(provider.embed(query), k);
  }

  /// Every entry whose similarity reaches `threshold`, best first.
  std::vector<SearchHit> above(const EmbeddingVector& query, double threshold) const {
    if (entries_.empty()) return {};
    auto all = search(query, entries_.size());
    all.erase(std::find_if(all.begin(), all.end(),
                           [&](const SearchHit& h) { return h.similarity < threshold; }),
              all.end());
    return all;
  }

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries_)
      if (e.key == key) return &e;
    return nullptr;
  }

 private:
  std::vector<Entry> entries_;
};

inline VectorIndex build_index(const std::vector<std::pair<std::string, std::string>>& items,
                               const EmbeddingProvider& provider) {
  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const auto& [_, text] : items) texts.push_back(text);
  auto vectors = provider.embed_batch(texts);
  std::vector<VectorIndex::Entry> entries;
  entries.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    entries.push_back({items[i].first, std::move(vectors[i]), items[i].second});
  return VectorIndex(std::move(entries));
}

inline VectorIndex build_index(const std::vector<std::pair<std::string, std::string>>& items) {
  return build_index(items, BuiltinEmbedder{});
}

}  // namespace diagnosys
