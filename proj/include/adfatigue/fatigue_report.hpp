#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/impression_log.hpp"
#include "adfatigue/text.hpp"

namespace adfatigue {

inline std::int64_t bin_index(double value, double width) {
  return static_cast<std::int64_t>(std::floor(value / width));
}

struct BinStats {
  std::uint64_t n = 0;
  std::uint64_t clicks = 0;
  std::uint64_t conversions = 0;
  double value_sum = 0.0;

  void add(const ImpressionRecord& r, double value) {
    ++n;
    clicks += r.click;
    conversions += r.conversion;
    value_sum += value;
  }
  double mean_value() const { return value_sum / static_cast<double>(n); }
  double ctr() const { return static_cast<double>(clicks) / static_cast<double>(n); }
  double post_imp_cvr() const { return static_cast<double>(conversions) / static_cast<double>(n); }
};

// Campaign key used for rows aggregated over all campaigns.
inline const std::string kAllCampaigns = "*";

// Binned fatigue analyses of an impression log:
//  - kappa_bins: every arm x campaign, by kappa bin (histogram plus CTR and
//    post-impression CVR per bin; the Random rows are the unbiased curves);
//  - by_frequency: mean kappa per arm at each 24h exposure frequency;
//  - true_fatigue: Random arm CTR by ground-truth fatigue bin.
struct FatigueReport {
  double kappa_bin_width = 5.0;
  double true_fatigue_bin_width = 1.0;
  std::map<std::tuple<Arm, std::string, std::int64_t>, BinStats> kappa_bins;
  std::map<std::tuple<Arm, std::uint32_t>, BinStats> by_frequency;
  std::map<std::tuple<std::string, std::int64_t>, BinStats> true_fatigue;
};

inline FatigueReport fatigue_report(std::span<const ImpressionRecord> log, double bin_width = 5.0,
                                    double true_fatigue_bin_width = 1.0) {
  if (log.empty()) throw DataError("fatigue report needs a nonempty log");
  if (!(bin_width > 0.0)) throw ConfigError("kappa_bin_width", "must be positive");
  if (!(true_fatigue_bin_width > 0.0)) throw ConfigError("true_fatigue_bin_width", "must be positive");
  FatigueReport rep;
  rep.kappa_bin_width = bin_width;
  rep.true_fatigue_bin_width = true_fatigue_bin_width;
  for (const auto& r : log) {
    const double k = r.kappa();
    const auto kb = bin_index(k, bin_width);
    rep.kappa_bins[{r.arm, r.campaign_id, kb}].add(r, k);
    rep.kappa_bins[{r.arm, kAllCampaigns, kb}].add(r, k);
    rep.by_frequency[{r.arm, r.frequency}].add(r, k);
    if (r.arm == Arm::kRandom) {
      const auto fb = bin_index(r.f_true, true_fatigue_bin_width);
      rep.true_fatigue[{r.campaign_id, fb}].add(r, r.f_true);
      rep.true_fatigue[{kAllCampaigns, fb}].add(r, r.f_true);
    }
  }
  return rep;
}

namespace detail {
inline std::string fmt(double v) { return text::format_double(v); }
}  // namespace detail

// Tab-separated tables with a header row, ready for external plotting.
inline void write_kappa_histogram(std::ostream& os, const FatigueReport& rep) {
  os << "arm\tcampaign\tbin_lo\tbin_hi\timpressions\tmean_kappa\tctr\tpost_imp_cvr\n";
  for (const auto& [key, b] : rep.kappa_bins) {
    const auto& [arm, campaign, bin] = key;
    os << to_string(arm) << '\t' << campaign << '\t' << detail::fmt(bin * rep.kappa_bin_width) << '\t'
       << detail::fmt((bin + 1) * rep.kappa_bin_width) << '\t' << b.n << '\t' << detail::fmt(b.mean_value()) << '\t'
       << detail::fmt(b.ctr()) << '\t' << detail::fmt(b.post_imp_cvr()) << '\n';
  }
}

inline void write_frequency_table(std::ostream& os, const FatigueReport& rep) {
  os << "arm\tfrequency\timpressions\tmean_kappa\n";
  for (const auto& [key, b] : rep.by_frequency) {
    const auto& [arm, freq] = key;
    os << to_string(arm) << '\t' << freq << '\t' << b.n << '\t' << detail::fmt(b.mean_value()) << '\n';
  }
}

inline void write_true_fatigue_table(std::ostream& os, const FatigueReport& rep) {
  os << "campaign\tbin_lo\tbin_hi\timpressions\tmean_f_true\tctr\n";
  for (const auto& [key, b] : rep.true_fatigue) {
    const auto& [campaign, bin] = key;
    os << campaign << '\t' << detail::fmt(bin * rep.true_fatigue_bin_width) << '\t'
       << detail::fmt((bin + 1) * rep.true_fatigue_bin_width) << '\t' << b.n << '\t'
       << detail::fmt(b.mean_value()) << '\t' << detail::fmt(b.ctr()) << '\n';
  }
}

// Peak of a binned CTR curve, considering bins with at least `min_count`
// impressions. Reports whether the curve rises into the peak and falls after
// it (the peak is neither the first nor the last qualifying bin).
struct CurvePeak {
  std::int64_t bin = 0;
  double ctr = 0.0;
  bool rises_then_falls = false;
};

inline std::optional<CurvePeak> ctr_peak(const FatigueReport& rep, const std::string& campaign,
                                         std::uint64_t min_count) {
  std::vector<std::pair<std::int64_t, double>> curve;
  for (const auto& [key, b] : rep.true_fatigue) {
    if (std::get<0>(key) == campaign && b.n >= min_count) curve.emplace_back(std::get<1>(key), b.ctr());
  }
  if (curve.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].second > curve[best].second) best = i;
  CurvePeak p{curve[best].first, curve[best].second, best > 0 && best + 1 < curve.size()};
  return p;
}

}  // namespace adfatigue
