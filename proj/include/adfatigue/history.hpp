#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/text.hpp"

namespace adfatigue {

using Timestamp = std::int64_t;  // seconds

inline constexpr Timestamp kSecondsPerMinute = 60;
inline constexpr Timestamp kSecondsPerDay = 86400;

constexpr Timestamp minute_bucket(Timestamp t) {
  Timestamp q = t / kSecondsPerMinute;
  if (t % kSecondsPerMinute != 0 && t < 0) --q;
  return q * kSecondsPerMinute;
}

struct ExposureRecord {
  std::string user_id;
  std::string campaign_id;
  std::string creative_id;
  Timestamp minute_bucket = 0;

  auto operator<=>(const ExposureRecord&) const = default;
};

// Exposure counts of one user within one campaign over the trailing window.
struct HistoryVector {
  std::string campaign_id;
  std::map<std::string, std::uint32_t, std::less<>> counts;

  std::uint32_t count(std::string_view creative_id) const {
    auto it = counts.find(creative_id);
    return it == counts.end() ? 0 : it->second;
  }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& [id, c] : counts) n += c;
    return n;
  }
};

// Real-time exposure store keyed by (user, campaign).
//
// At most one record is kept per (user, campaign, creative, minute). A query
// at time t sees records whose minute bucket lies in (t - window, t]. Records
// that can no longer be seen by any query are dropped on arrival, and
// purge_expired() reclaims the rest.
//
// Thread-safe: keys are spread over independently locked shards, so every
// (user, campaign) history is linearizable.
class HistoryStore {
 public:
  explicit HistoryStore(Timestamp window = kSecondsPerDay) : window_(window) {
    if (window_ <= 0) throw ConfigError("history.window", "must be positive");
  }

  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;

  Timestamp window() const { return window_; }

  // Returns false when the exposure was deduplicated or is already outside
  // the window relative to the newest exposure of the same key.
  bool record_exposure(std::string_view user_id, std::string_view campaign_id,
                       std::string_view creative_id, Timestamp t) {
    const std::string key = make_key(user_id, campaign_id);
    const Timestamp bucket = minute_bucket(t);
    Shard& shard = shard_for(key);
    std::unique_lock lock(shard.mutex);
    Entry& e = shard.entries[key];
    if (!e.records.empty() && bucket <= e.latest_bucket - window_) return false;
    const Item item{bucket, std::string(creative_id)};
    auto pos = std::lower_bound(e.records.begin(), e.records.end(), item);
    if (pos != e.records.end() && *pos == item) return false;
    e.records.insert(pos, item);
    e.latest_bucket = std::max(e.latest_bucket, bucket);
    if (e.records.size() == 1) e.latest_bucket = bucket;
    return true;
  }

  HistoryVector get_history(std::string_view user_id, std::string_view campaign_id, Timestamp t) const {
    HistoryVector h;
    h.campaign_id = std::string(campaign_id);
    const std::string key = make_key(user_id, campaign_id);
    const Shard& shard = shard_for(key);
    std::shared_lock lock(shard.mutex);
    auto it = shard.entries.find(key);
    if (it == shard.entries.end()) return h;
    const auto& recs = it->second.records;
    const Timestamp lo = t - window_;
    // First record with bucket > lo.
    auto first = std::partition_point(recs.begin(), recs.end(),
                                      [lo](const Item& r) { return r.bucket <= lo; });
    for (auto r = first; r != recs.end() && r->bucket <= t; ++r) ++h.counts[r->creative_id];
    return h;
  }

  // Removes every record that no query at time >= t can see.
  std::size_t purge_expired(Timestamp t) {
    const Timestamp lo = t - window_;
    std::size_t removed = 0;
    for (auto& shard : shards_) {
      std::unique_lock lock(shard.mutex);
      for (auto it = shard.entries.begin(); it != shard.entries.end();) {
        auto& recs = it->second.records;
        auto keep = std::partition_point(recs.begin(), recs.end(),
                                         [lo](const Item& r) { return r.bucket <= lo; });
        removed += static_cast<std::size_t>(keep - recs.begin());
        recs.erase(recs.begin(), keep);
        if (recs.empty()) {
          it = shard.entries.erase(it);
        } else {
          ++it;
        }
      }
    }
    return removed;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& shard : shards_) {
      std::shared_lock lock(shard.mutex);
      for (const auto& [k, e] : shard.entries) n += e.records.size();
    }
    return n;
  }

  std::vector<ExposureRecord> records() const {
    std::vector<ExposureRecord> out;
    for (const auto& shard : shards_) {
      std::shared_lock lock(shard.mutex);
      for (const auto& [k, e] : shard.entries) {
        const auto sep = k.find(kKeySep);
        for (const auto& r : e.records) {
          out.push_back({k.substr(0, sep), k.substr(sep + 1), r.creative_id, r.bucket});
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Snapshot: one tab-separated record per line,
  //   user_id  campaign_id  creative_id  minute_bucket
  // sorted by (user, campaign, creative, minute).
  void dump(std::ostream& os) const {
    for (const auto& r : records()) {
      os << r.user_id << '\t' << r.campaign_id << '\t' << r.creative_id << '\t' << r.minute_bucket << '\n';
    }
  }

  void load(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (text::split_ws(line).empty()) continue;
      auto f = text::split(line, '\t');
      std::optional<Timestamp> bucket;
      if (f.size() == 4) bucket = text::parse_int<Timestamp>(f[3]);
      if (f.size() != 4 || !bucket || !text::is_valid_id(f[0]) || !text::is_valid_id(f[1]) ||
          !text::is_valid_id(f[2])) {
        throw DataError("history snapshot line " + std::to_string(lineno) + ": malformed record");
      }
      record_exposure(f[0], f[1], f[2], *bucket);
    }
  }

 private:
  static constexpr char kKeySep = '\x1f';
  static constexpr std::size_t kShards = 64;

  struct Item {
    Timestamp bucket;
    std::string creative_id;
    auto operator<=>(const Item&) const = default;
  };
  struct Entry {
    std::vector<Item> records;  // sorted by (bucket, creative)
    Timestamp latest_bucket = 0;
  };
  struct Shard {
    mutable std::shared_mutex mutex;
    std::unordered_map<std::string, Entry> entries;
  };

  static std::string make_key(std::string_view user_id, std::string_view campaign_id) {
    std::string key;
    key.reserve(user_id.size() + campaign_id.size() + 1);
    key.append(user_id);
    key.push_back(kKeySep);
    key.append(campaign_id);
    return key;
  }

  Shard& shard_for(const std::string& key) { return shards_[std::hash<std::string>{}(key) % kShards]; }
  const Shard& shard_for(const std::string& key) const {
    return shards_[std::hash<std::string>{}(key) % kShards];
  }

  Timestamp window_;
  std::array<Shard, kShards> shards_;
};

}  // namespace adfatigue
