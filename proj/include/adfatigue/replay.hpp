#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "adfatigue/errors.hpp"
#include "adfatigue/impression_log.hpp"
#include "adfatigue/policy.hpp"
#include "adfatigue/reward_model.hpp"
#include "adfatigue/rng.hpp"

namespace adfatigue {

// A policy under offline evaluation: picks a creative id for a logged
// impression (context, candidates and per-candidate fatigue as logged).
using ReplayPolicy = std::function<std::string(const ImpressionRecord&, Rng&)>;

struct ReplayEstimate {
  double ctr = 0.0;
  std::uint64_t consumed = 0;
  std::uint64_t clicks = 0;
  std::uint64_t records = 0;

  double consumed_fraction() const { return records ? static_cast<double>(consumed) / records : 0.0; }
};

// Replay estimator over a log of uniformly random choices: a record counts
// only when the policy picks the logged creative.
inline ReplayEstimate replay_evaluate(std::span<const ImpressionRecord> random_log, const ReplayPolicy& policy,
                                      std::uint64_t seed) {
  ReplayEstimate est;
  Rng rng(seed);
  for (const auto& r : random_log) {
    if (r.arm != Arm::kRandom) throw DataError("replay needs a log of the Random arm only");
    ++est.records;
    if (policy(r, rng) == r.chosen()) {
      ++est.consumed;
      est.clicks += r.click;
    }
  }
  if (est.consumed == 0) throw UndefinedEstimateError("no logged choice matched the policy");
  est.ctr = static_cast<double>(est.clicks) / static_cast<double>(est.consumed);
  return est;
}

inline ReplayPolicy logged_policy() {
  return [](const ImpressionRecord& r, Rng&) { return r.chosen(); };
}

inline ReplayPolicy fixed_creative_policy(std::string creative_id) {
  return [id = std::move(creative_id)](const ImpressionRecord&, Rng&) { return id; };
}

inline ReplayPolicy uniform_policy() {
  return [](const ImpressionRecord& r, Rng& rng) {
    return (*r.candidates)[rng.uniform_index(r.candidates->size())];
  };
}

// Thompson-sampling selection with the given posterior; the posterior must
// outlive the returned policy.
inline ReplayPolicy thompson_policy(const ModelPosterior& posterior, double alpha) {
  return [&posterior, alpha](const ImpressionRecord& r, Rng& rng) {
    const auto d = select_with_kappa(r.context_vector(), *r.candidates, r.kappas, posterior.mode(), posterior,
                                     alpha, rng);
    return d.chosen;
  };
}

}  // namespace adfatigue
