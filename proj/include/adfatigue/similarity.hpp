#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/text.hpp"

namespace adfatigue {

// Bag of words: token -> count (every count >= 1).
using TokenBag = std::map<std::string, std::uint32_t, std::less<>>;

// Text -> bag of words. Swappable so that language-specific analyzers can be
// plugged in; the default lowercases ASCII and splits on whitespace.
using Tokenizer = std::function<TokenBag(std::string_view)>;

inline TokenBag whitespace_tokenize(std::string_view text) {
  TokenBag bag;
  for (auto tok : text::split_ws(text)) {
    std::string lowered(tok);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    ++bag[lowered];
  }
  return bag;
}

struct Creative {
  std::string creative_id;
  std::string campaign_id;
  TokenBag tokens;
  std::vector<double> image_embedding;  // empty when absent
  std::int64_t active_from = 0;         // seconds, inclusive
  std::int64_t active_until = 0;        // seconds, exclusive

  bool active_at(std::int64_t t) const { return active_from <= t && t < active_until; }
};

// Cosine similarity of two bags of words; 0 when either is empty.
inline double text_similarity(const TokenBag& a, const TokenBag& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [tok, c] : a) na += static_cast<double>(c) * c;
  for (const auto& [tok, c] : b) nb += static_cast<double>(c) * c;
  // Merge-walk over the two sorted maps.
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += static_cast<double>(ia->second) * ib->second;
      ++ia;
      ++ib;
    }
  }
  // na*nb is exact for realistic counts, so identical bags give exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

// Cosine similarity of two embeddings, clamped below at 0. Returns 0 when
// either vector is empty or all-zero.
inline double image_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return 0.0;
  if (a.size() != b.size()) {
    throw CatalogIntegrityError("embedding dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

// Text similarity carries three times the weight of image similarity.
constexpr double combined_similarity(double s_text, double s_image) {
  return (3.0 * s_text + s_image) / 4.0;
}

inline double creative_similarity(const Creative& a, const Creative& b) {
  return combined_similarity(text_similarity(a.tokens, b.tokens),
                             image_similarity(a.image_embedding, b.image_embedding));
}

// Symmetric per-campaign matrix of creative-pair similarities in [0, 1].
// Immutable once built; safe to share between threads.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;

  SimilarityMatrix(std::string campaign_id, std::vector<std::string> ids, std::vector<double> values)
      : campaign_id_(std::move(campaign_id)), ids_(std::move(ids)), values_(std::move(values)) {
    if (values_.size() != ids_.size() * ids_.size()) {
      throw DataError("similarity matrix for campaign " + campaign_id_ + ": expected " +
                      std::to_string(ids_.size() * ids_.size()) + " values, got " +
                      std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) {
        throw CatalogIntegrityError("duplicate creative_id " + ids_[i] + " in campaign " + campaign_id_);
      }
    }
  }

  const std::string& campaign_id() const { return campaign_id_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  std::span<const double> values() const { return values_; }

  std::optional<std::size_t> index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  double at(std::size_t j, std::size_t k) const { return values_[j * ids_.size() + k]; }

  // s(a, .) as a contiguous row; equals the column by symmetry.
  std::span<const double> row(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * ids_.size(), ids_.size());
  }

  struct OffDiagonalStats {
    std::size_t pairs = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation over unordered pairs
  };

  std::optional<OffDiagonalStats> off_diagonal_stats() const {
    const std::size_t n = size();
    if (n < 2) return std::nullopt;
    OffDiagonalStats st;
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) sum += at(j, k);
    st.pairs = n * (n - 1) / 2;
    st.mean = sum / static_cast<double>(st.pairs);
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) ss += (at(j, k) - st.mean) * (at(j, k) - st.mean);
    st.sd = st.pairs > 1 ? std::sqrt(ss / static_cast<double>(st.pairs - 1)) : 0.0;
    return st;
  }

  bool operator==(const SimilarityMatrix& o) const {
    return campaign_id_ == o.campaign_id_ && ids_ == o.ids_ && values_ == o.values_;
  }

 private:
  std::string campaign_id_;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Builds the matrix for one campaign from the catalog, in catalog order.
// Self-similarity is 1 by definition.
inline SimilarityMatrix build_similarity_matrix(std::span<const Creative> catalog,
                                                const std::string& campaign_id) {
  std::vector<const Creative*> members;
  std::unordered_set<std::string> seen;
  for (const auto& c : catalog) {
    if (c.campaign_id != campaign_id) continue;
    if (!seen.insert(c.creative_id).second) {
      throw CatalogIntegrityError("duplicate creative_id " + c.creative_id);
    }
    members.push_back(&c);
  }
  if (members.empty()) {
    throw CatalogIntegrityError("campaign " + campaign_id + " has no creatives");
  }
  const std::size_t n = members.size();
  std::vector<double> values(n * n, 0.0);
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    ids.push_back(members[j]->creative_id);
    values[j * n + j] = 1.0;
    for (std::size_t k = j + 1; k < n; ++k) {
      const double s = creative_similarity(*members[j], *members[k]);
      values[j * n + k] = s;
      values[k * n + j] = s;
    }
  }
  return SimilarityMatrix(campaign_id, std::move(ids), std::move(values));
}

// One matrix per campaign, ordered by campaign id.
using SimilarityIndex = std::map<std::string, SimilarityMatrix, std::less<>>;

inline SimilarityIndex build_similarity_index(std::span<const Creative> catalog) {
  std::unordered_set<std::string> ids;
  for (const auto& c : catalog) {
    if (!ids.insert(c.creative_id).second) {
      throw CatalogIntegrityError("duplicate creative_id " + c.creative_id);
    }
  }
  std::vector<std::string> campaigns;
  for (const auto& c : catalog) campaigns.push_back(c.campaign_id);
  std::sort(campaigns.begin(), campaigns.end());
  campaigns.erase(std::unique(campaigns.begin(), campaigns.end()), campaigns.end());
  SimilarityIndex out;
  for (const auto& cid : campaigns) out.emplace(cid, build_similarity_matrix(catalog, cid));
  return out;
}

// File format (text, whitespace separated):
//   adfatigue-similarity 1
//   campaign <campaign_id> <n>
//   <creative_id_1> ... <creative_id_n>
//   <n rows of n values>
//   ... further campaign blocks
// Values use the shortest round-trip decimal form, so write/read is bit-exact.
inline void write_similarity(std::ostream& os, const SimilarityIndex& index) {
  os << "adfatigue-similarity 1\n";
  for (const auto& [cid, m] : index) {
    os << "campaign " << cid << ' ' << m.size() << '\n';
    for (std::size_t j = 0; j < m.size(); ++j) os << (j ? " " : "") << m.ids()[j];
    os << '\n';
    for (std::size_t j = 0; j < m.size(); ++j) {
      auto r = m.row(j);
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? " " : "") << text::format_double(r[k]);
      os << '\n';
    }
  }
}

inline SimilarityIndex read_similarity(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!text::split_ws(line).empty()) return true;
    }
    return false;
  };
  auto fail = [&](const std::string& msg) -> DataError {
    return DataError("similarity file line " + std::to_string(lineno) + ": " + msg);
  };
  if (!next_line() || text::split_ws(line) != std::vector<std::string_view>{"adfatigue-similarity", "1"}) {
    throw fail("missing 'adfatigue-similarity 1' header");
  }
  SimilarityIndex out;
  while (next_line()) {
    auto head = text::split_ws(line);
    if (head.size() != 3 || head[0] != "campaign") throw fail("expected 'campaign <id> <n>'");
    auto n = text::parse_int<std::size_t>(head[2]);
    if (!n || *n == 0) throw fail("bad creative count");
    std::string cid(head[1]);
    if (!next_line()) throw fail("missing creative id list");
    auto idtoks = text::split_ws(line);
    if (idtoks.size() != *n) throw fail("creative id list has wrong length");
    std::vector<std::string> ids(idtoks.begin(), idtoks.end());
    std::vector<double> values;
    values.reserve(*n * *n);
    for (std::size_t j = 0; j < *n; ++j) {
      if (!next_line()) throw fail("truncated matrix");
      auto toks = text::split_ws(line);
      if (toks.size() != *n) throw fail("row has wrong length");
      for (auto t : toks) {
        auto v = text::parse_double(t);
        if (!v || *v < 0.0 || *v > 1.0) throw fail("bad similarity value '" + std::string(t) + "'");
        values.push_back(*v);
      }
    }
    for (std::size_t j = 0; j < *n; ++j)
      for (std::size_t k = 0; k < j; ++k)
        if (values[j * *n + k] != values[k * *n + j]) throw fail("matrix for " + cid + " is not symmetric");
    if (!out.emplace(cid, SimilarityMatrix(cid, std::move(ids), std::move(values))).second) {
      throw fail("duplicate campaign " + cid);
    }
  }
  return out;
}

}  // namespace adfatigue
