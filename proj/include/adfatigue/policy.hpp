#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/fatigue.hpp"
#include "adfatigue/features.hpp"
#include "adfatigue/history.hpp"
#include "adfatigue/reward_model.hpp"
#include "adfatigue/similarity.hpp"

namespace adfatigue {

// Any random source offering the two draws selection needs.
template <class R>
concept DecisionRng = requires(R r, std::uint64_t n) {
  { r.uniform_index(n) } -> std::convertible_to<std::uint64_t>;
  { r.normal() } -> std::convertible_to<double>;
};

// Scores assigned to creatives without a trained posterior: above or below
// every sigmoid output.
inline constexpr double kExploreHigh = std::numeric_limits<double>::infinity();
inline constexpr double kExploreLow = -std::numeric_limits<double>::infinity();

struct Decision {
  std::string chosen;
  std::size_t chosen_index = 0;
  std::vector<double> scores;
  std::vector<double> kappas;  // empty when no fatigue information was supplied
  std::vector<bool> available;
  std::uint64_t seed = 0;      // seed of the rng that produced this decision, if known
};

// Index of a maximal score, uniformly at random among ties. Consumes a draw
// only when there is more than one maximum.
template <DecisionRng R>
std::size_t tie_break(std::span<const double> scores, R& rng) {
  if (scores.empty()) throw DecisionError("no scores to choose from");
  double best = scores[0];
  for (double s : scores) best = std::max(best, s);
  std::vector<std::size_t> top;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] == best) top.push_back(i);
  if (top.size() == 1) return top[0];
  return top[static_cast<std::size_t>(rng.uniform_index(top.size()))];
}

// Thompson-sampling selection given per-candidate fatigue values.
//
// Candidates with a posterior get sigmoid(z.theta0 + z.theta(a) [+ b1 k + b2 k^2])
// with theta(a) drawn from N(mu, alpha * Sigma). Candidates without one draw
// the high sentinel with probability 1/|A_t| and the low sentinel otherwise,
// independently of each other. Draw order: candidates in input order, then
// the tie-break.
template <DecisionRng R>
Decision select_with_kappa(const ContextVector& x, std::span<const std::string> candidates,
                           std::span<const double> kappas, Mode mode, const ModelPosterior& posterior,
                           double alpha, R& rng) {
  if (candidates.empty()) throw DecisionError("empty candidate set");
  if (mode == Mode::kFatigueAware && kappas.size() != candidates.size()) {
    throw DecisionError("fatigue-aware selection needs one fatigue value per candidate");
  }
  if (mode != posterior.mode()) throw DecisionError("policy mode does not match posterior mode");
  const int bits = posterior.hash_bits();
  const std::uint64_t n = candidates.size();
  Decision d;
  d.scores.reserve(n);
  d.available.reserve(n);
  d.kappas.assign(kappas.begin(), kappas.end());
  std::vector<std::uint32_t> action_idx;
  for (std::size_t k = 0; k < n; ++k) {
    const bool avail = posterior.is_available(candidates[k]);
    d.available.push_back(avail);
    if (!avail) {
      d.scores.push_back(rng.uniform_index(n) == 0 ? kExploreHigh : kExploreLow);
      continue;
    }
    const auto f = candidate_features(x, candidates[k], bits);
    action_idx.clear();
    for (const auto& [i, v] : f.action.entries) action_idx.push_back(i);
    const auto theta = sample_weights(posterior, action_idx, alpha, rng);
    const double kappa = mode == Mode::kFatigueAware ? kappas[k] : 0.0;
    d.scores.push_back(predict(f.combined(), theta, kappa, mode, bits));
  }
  d.chosen_index = tie_break(std::span<const double>(d.scores), rng);
  d.chosen = candidates[d.chosen_index];
  return d;
}

// Full per-impression selection: reads the user's history for the campaign of
// `sim`, computes kappa for every candidate, then scores. Fatigue-aware mode
// requires `sim` and `history`; baseline mode uses them only to report kappa.
template <DecisionRng R>
Decision select(const ContextVector& x, std::span<const std::string> candidates, std::string_view user_id,
                Timestamp t, Mode mode, const ModelPosterior& posterior, const SimilarityMatrix* sim,
                const HistoryStore* history, double alpha, R& rng) {
  if (candidates.empty()) throw DecisionError("empty candidate set");
  std::vector<double> kappas;
  if (sim && history) {
    kappas = fatigue(history->get_history(user_id, sim->campaign_id(), t), *sim, candidates);
  } else if (mode == Mode::kFatigueAware) {
    throw DecisionError("fatigue-aware selection requires a similarity matrix and a history store");
  }
  return select_with_kappa(x, candidates, kappas, mode, posterior, alpha, rng);
}

}  // namespace adfatigue
