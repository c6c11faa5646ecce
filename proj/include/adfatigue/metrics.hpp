#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adfatigue/impression_log.hpp"

namespace adfatigue {

struct ArmCounts {
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  std::uint64_t post_click_conversions = 0;
  std::uint64_t conversions = 0;  // post-click and post-impression
  double kappa_sum = 0.0;

  void add(const ImpressionRecord& r) {
    ++impressions;
    clicks += r.click;
    post_click_conversions += r.post_click_conversion();
    conversions += r.conversion;
    kappa_sum += r.kappa();
  }
};

enum class Metric { kCtr, kCvr, kPostClickCvr, kPostImpCvr };

inline constexpr Metric kMetrics[] = {Metric::kCtr, Metric::kCvr, Metric::kPostClickCvr, Metric::kPostImpCvr};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kCtr: return "ctr";
    case Metric::kCvr: return "cvr";
    case Metric::kPostClickCvr: return "post_click_cvr";
    case Metric::kPostImpCvr: return "post_imp_cvr";
  }
  return "?";
}

struct Proportion {
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
  std::optional<double> value() const {
    if (trials == 0) return std::nullopt;
    return static_cast<double>(successes) / static_cast<double>(trials);
  }
};

// CTR = clicks / impressions; CVR = post-click conversions / impressions;
// post-click CVR = post-click conversions / clicks; post-impression CVR =
// all conversions / impressions.
inline Proportion proportion(const ArmCounts& c, Metric m) {
  switch (m) {
    case Metric::kCtr: return {c.clicks, c.impressions};
    case Metric::kCvr: return {c.post_click_conversions, c.impressions};
    case Metric::kPostClickCvr: return {c.post_click_conversions, c.clicks};
    case Metric::kPostImpCvr: return {c.conversions, c.impressions};
  }
  return {};
}

inline double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

// Two-sided two-proportion z-test with pooled variance and continuity
// correction.
inline double significance_test(Proportion a, Proportion b) {
  if (a.trials == 0 || b.trials == 0) throw DataError("significance test needs impressions in both arms");
  const double n1 = static_cast<double>(a.trials), n2 = static_cast<double>(b.trials);
  const double p1 = static_cast<double>(a.successes) / n1, p2 = static_cast<double>(b.successes) / n2;
  const double pooled = static_cast<double>(a.successes + b.successes) / (n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
  if (!(se > 0.0)) return 1.0;
  const double diff = std::max(0.0, std::fabs(p1 - p2) - 0.5 * (1.0 / n1 + 1.0 / n2));
  return normal_two_sided_p(diff / se);
}

struct MetricsReport {
  std::vector<std::string> campaigns;
  std::map<Arm, ArmCounts> overall;
  std::map<std::pair<Arm, std::string>, ArmCounts> per_campaign;

  const ArmCounts& counts(Arm arm, const std::string* campaign = nullptr) const {
    static const ArmCounts empty;
    if (!campaign) {
      auto it = overall.find(arm);
      return it == overall.end() ? empty : it->second;
    }
    auto it = per_campaign.find({arm, *campaign});
    return it == per_campaign.end() ? empty : it->second;
  }

  std::optional<double> raw(Arm arm, Metric m, const std::string* campaign = nullptr) const {
    return proportion(counts(arm, campaign), m).value();
  }

  // Arm metric divided by the Random arm's; undefined unless Random's > 0.
  std::optional<double> normalized(Arm arm, Metric m, const std::string* campaign = nullptr) const {
    const auto base = raw(Arm::kRandom, m, campaign);
    const auto v = raw(arm, m, campaign);
    if (!base || !v || !(*base > 0.0)) return std::nullopt;
    return *v / *base;
  }

  std::optional<double> mean_kappa(Arm arm, const std::string* campaign = nullptr) const {
    const auto& c = counts(arm, campaign);
    if (c.impressions == 0) return std::nullopt;
    return c.kappa_sum / static_cast<double>(c.impressions);
  }

  std::optional<double> p_value(Arm a, Arm b, Metric m) const {
    const auto pa = proportion(counts(a), m), pb = proportion(counts(b), m);
    if (pa.trials == 0 || pb.trials == 0) return std::nullopt;
    return significance_test(pa, pb);
  }
};

inline MetricsReport compute_metrics(std::span<const ImpressionRecord> log) {
  MetricsReport rep;
  for (const auto& r : log) {
    rep.overall[r.arm].add(r);
    rep.per_campaign[{r.arm, r.campaign_id}].add(r);
    if (std::find(rep.campaigns.begin(), rep.campaigns.end(), r.campaign_id) == rep.campaigns.end()) {
      rep.campaigns.push_back(r.campaign_id);
    }
  }
  std::sort(rep.campaigns.begin(), rep.campaigns.end());
  return rep;
}

namespace detail {
inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json arm_json(const MetricsReport& rep, Arm arm, const std::string* campaign) {
  nlohmann::ordered_json j;
  const auto& c = rep.counts(arm, campaign);
  j["impressions"] = c.impressions;
  j["clicks"] = c.clicks;
  j["post_click_conversions"] = c.post_click_conversions;
  j["conversions"] = c.conversions;
  j["mean_kappa"] = opt_json(rep.mean_kappa(arm, campaign));
  for (Metric m : kMetrics) j[std::string(to_string(m))] = opt_json(rep.raw(arm, m, campaign));
  nlohmann::ordered_json norm;
  for (Metric m : kMetrics) norm[std::string(to_string(m))] = opt_json(rep.normalized(arm, m, campaign));
  j["normalized"] = norm;
  return j;
}

inline std::string cell(const std::optional<double>& v, const char* fmt = "%.3f") {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, *v);
  return buf;
}

inline std::string stars(const std::optional<double>& p) {
  if (!p) return "";
  if (*p < 0.01) return "***";
  if (*p < 0.05) return "**";
  if (*p < 0.1) return "*";
  return "";
}
}  // namespace detail

// Machine-readable report. Arms that have no impressions are omitted.
inline nlohmann::ordered_json metrics_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["format"] = "adfatigue-metrics";
  j["version"] = 1;
  nlohmann::ordered_json overall;
  for (Arm a : kArms)
    if (rep.counts(a).impressions) overall[std::string(to_string(a))] = detail::arm_json(rep, a, nullptr);
  j["overall"] = overall;
  nlohmann::ordered_json camps;
  for (const auto& cid : rep.campaigns) {
    nlohmann::ordered_json cj;
    for (Arm a : kArms)
      if (rep.counts(a, &cid).impressions) cj[std::string(to_string(a))] = detail::arm_json(rep, a, &cid);
    camps[cid] = cj;
  }
  j["campaigns"] = camps;
  nlohmann::ordered_json sig;
  const std::pair<Arm, Arm> pairs[] = {{Arm::kFatigueAware, Arm::kBaseline},
                                       {Arm::kFatigueAware, Arm::kRandom},
                                       {Arm::kBaseline, Arm::kRandom}};
  for (auto [a, b] : pairs) {
    if (!rep.counts(a).impressions || !rep.counts(b).impressions) continue;
    nlohmann::ordered_json pj;
    for (Metric m : kMetrics) pj[std::string(to_string(m))] = detail::opt_json(rep.p_value(a, b, m));
    sig[std::string(to_string(a)) + "_vs_" + std::string(to_string(b))] = pj;
  }
  j["p_values"] = sig;
  return j;
}

// Aligned tables: overall normalized metrics (stars mark FA vs Baseline
// significance) and per-campaign normalized CTR.
inline void write_metrics_table(std::ostream& os, const MetricsReport& rep) {
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %12s %8s %8s %15s %13s %10s\n", "Alg.", "Impressions", "CTR", "CVR",
                "Post-Click CVR", "Post-Imp CVR", "mean kappa");
  os << line;
  for (Arm a : kArms) {
    if (!rep.counts(a).impressions) continue;
    std::string cells[4];
    for (int k = 0; k < 4; ++k) {
      const Metric m = kMetrics[k];
      cells[k] = detail::cell(rep.normalized(a, m));
      if (a == Arm::kFatigueAware) cells[k] += detail::stars(rep.p_value(Arm::kFatigueAware, Arm::kBaseline, m));
    }
    std::snprintf(line, sizeof line, "%-10s %12llu %8s %8s %15s %13s %10s\n", std::string(to_string(a)).c_str(),
                  static_cast<unsigned long long>(rep.counts(a).impressions), cells[0].c_str(), cells[1].c_str(),
                  cells[2].c_str(), cells[3].c_str(), detail::cell(rep.mean_kappa(a), "%.2f").c_str());
    os << line;
  }
  os << "\nNormalized CTR by campaign\n";
  std::string head = "Alg.      ";
  for (const auto& c : rep.campaigns) {
    std::snprintf(line, sizeof line, " %8s", c.c_str());
    head += line;
  }
  os << head << '\n';
  for (Arm a : kArms) {
    if (!rep.counts(a).impressions) continue;
    std::snprintf(line, sizeof line, "%-10s", std::string(to_string(a)).c_str());
    std::string row = line;
    for (const auto& c : rep.campaigns) {
      std::snprintf(line, sizeof line, " %8s", detail::cell(rep.normalized(a, Metric::kCtr, &c)).c_str());
      row += line;
    }
    os << row << '\n';
  }
}

}  // namespace adfatigue
