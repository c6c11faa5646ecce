#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/history.hpp"
#include "adfatigue/similarity.hpp"

namespace adfatigue {

// Estimated ad fatigue of a user towards a candidate creative: the exposure
// history weighted by the candidate's similarity to each exposed creative,
//   kappa(a) = sum_j h_j * s(a, j).
// Exposures to creatives missing from `sim` (retired creatives) add nothing.
inline double fatigue(const HistoryVector& h, const SimilarityMatrix& sim, std::string_view candidate) {
  const auto a = sim.index_of(candidate);
  if (!a) {
    throw ConfigError("similarity", "creative " + std::string(candidate) + " is not in the matrix for campaign " +
                                        sim.campaign_id());
  }
  const auto s = sim.row(*a);
  double kappa = 0.0;
  for (const auto& [id, count] : h.counts) {
    if (auto j = sim.index_of(id)) kappa += static_cast<double>(count) * s[*j];
  }
  return kappa;
}

inline std::vector<double> fatigue(const HistoryVector& h, const SimilarityMatrix& sim,
                                   std::span<const std::string> candidates) {
  // Resolve history indices once, then one dot product per candidate.
  std::vector<std::pair<std::size_t, double>> exposed;
  exposed.reserve(h.counts.size());
  for (const auto& [id, count] : h.counts) {
    if (auto j = sim.index_of(id)) exposed.emplace_back(*j, static_cast<double>(count));
  }
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const auto a = sim.index_of(c);
    if (!a) {
      throw ConfigError("similarity",
                        "creative " + c + " is not in the matrix for campaign " + sim.campaign_id());
    }
    const auto s = sim.row(*a);
    double kappa = 0.0;
    for (const auto& [j, count] : exposed) kappa += count * s[j];
    out.push_back(kappa);
  }
  return out;
}

}  // namespace adfatigue
