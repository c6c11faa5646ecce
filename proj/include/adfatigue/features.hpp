#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/hash.hpp"

namespace adfatigue {

inline constexpr std::string_view kBiasFeature = "bias";

// Raw categorical context of one impression, e.g. "device=ios", "site=news",
// "ssp=x", "hour=13". Always holds the bias feature exactly once.
class ContextVector {
 public:
  ContextVector() : features_{std::string(kBiasFeature)} {}

  explicit ContextVector(std::vector<std::string> features) : features_(std::move(features)) {
    const auto bias = std::count(features_.begin(), features_.end(), kBiasFeature);
    if (bias == 0) features_.insert(features_.begin(), std::string(kBiasFeature));
    if (bias > 1) throw DataError("context vector contains the bias feature more than once");
  }

  const std::vector<std::string>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }

  bool operator==(const ContextVector&) const = default;

 private:
  std::vector<std::string> features_;
};

struct RawFeature {
  std::string key;
  double value = 1.0;
  bool action_specific = false;

  bool operator==(const RawFeature&) const = default;
};

// Key of the copy of `feature` that belongs to `creative_id`.
inline std::string tagged_key(std::string_view creative_id, std::string_view feature) {
  std::string k;
  k.reserve(creative_id.size() + feature.size() + 3);
  k.append("a:").append(creative_id).push_back('^');
  k.append(feature);
  return k;
}

// Interaction expansion z = (x, a (x) x): every context feature once as-is
// (shared across creatives) and once tagged with the chosen creative. Other
// creatives' blocks are zero and therefore absent from the sparse form.
inline std::vector<RawFeature> expand_features(const ContextVector& x, std::string_view creative_id) {
  std::vector<RawFeature> out;
  out.reserve(2 * x.size());
  for (const auto& f : x.features()) out.push_back({f, 1.0, false});
  for (const auto& f : x.features()) out.push_back({tagged_key(creative_id, f), 1.0, true});
  return out;
}

// Sparse hashed vector, sorted by index, duplicates summed.
struct HashedFeatures {
  std::uint64_t dimension = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += v * v;
    return s;
  }
  bool operator==(const HashedFeatures&) const = default;
};

inline std::uint32_t feature_index(std::string_view key, int hash_bits) {
  const std::uint32_t mask = hash_bits >= 32 ? 0xffffffffu : ((std::uint32_t{1} << hash_bits) - 1);
  return murmur3_32(key) & mask;
}

namespace detail {
inline HashedFeatures normalize(std::vector<std::pair<std::uint32_t, double>> entries, std::uint64_t dim) {
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  HashedFeatures out;
  out.dimension = dim;
  for (const auto& [i, v] : entries) {
    if (!out.entries.empty() && out.entries.back().first == i) {
      out.entries.back().second += v;
    } else {
      out.entries.emplace_back(i, v);
    }
  }
  return out;
}
}  // namespace detail

// Hashing trick: each key lands on murmur3_32(key) mod 2^M; collisions add.
inline HashedFeatures hash_features(const std::vector<RawFeature>& raw, int hash_bits) {
  if (hash_bits < 1 || hash_bits > 31) throw ConfigError("hash_bits", "must be in [1, 31]");
  std::vector<std::pair<std::uint32_t, double>> entries;
  entries.reserve(raw.size());
  for (const auto& f : raw) entries.emplace_back(feature_index(f.key, hash_bits), f.value);
  return detail::normalize(std::move(entries), std::uint64_t{1} << hash_bits);
}

// The hashed expansion split into the shared block (theta_0) and the
// creative-specific block (theta(a)); `combined()` is the full z.
struct CandidateFeatures {
  HashedFeatures shared;
  HashedFeatures action;

  HashedFeatures combined() const {
    auto entries = shared.entries;
    entries.insert(entries.end(), action.entries.begin(), action.entries.end());
    return detail::normalize(std::move(entries), shared.dimension);
  }
};

inline CandidateFeatures candidate_features(const ContextVector& x, std::string_view creative_id, int hash_bits) {
  std::vector<RawFeature> shared, action;
  for (auto& f : expand_features(x, creative_id)) (f.action_specific ? action : shared).push_back(std::move(f));
  return {hash_features(shared, hash_bits), hash_features(action, hash_bits)};
}

}  // namespace adfatigue
