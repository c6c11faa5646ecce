#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/fatigue.hpp"
#include "adfatigue/fatigue_report.hpp"
#include "adfatigue/hash.hpp"
#include "adfatigue/history.hpp"
#include "adfatigue/impression_log.hpp"
#include "adfatigue/metrics.hpp"
#include "adfatigue/policy.hpp"
#include "adfatigue/reward_model.hpp"
#include "adfatigue/rng.hpp"
#include "adfatigue/sim_env.hpp"

namespace adfatigue {

// Settings shared by the FA and Baseline arms.
struct PolicyConfig {
  int hash_bits = 24;
  double alpha = 0.01;
  double negative_rate = 0.05;
  TrainConfig train;
};

inline void validate(const PolicyConfig& p) {
  if (p.hash_bits < 1 || p.hash_bits > 30) throw ConfigError("policy.hash_bits", "must be in [1, 30]");
  if (!(p.alpha > 0.0 && p.alpha <= 1.0)) throw ConfigError("policy.alpha", "must be in (0, 1]");
  if (!(p.negative_rate > 0.0 && p.negative_rate <= 1.0))
    throw ConfigError("policy.negative_rate", "must be in (0, 1]");
  validate(p.train, "policy.");
}

struct ExperimentConfig {
  sim::EnvConfig env;
  PolicyConfig policy;
  int days = 7;
  int pre_days = 1;  // all traffic served by the existing (Baseline) policy
  std::uint64_t seed = 1;
  Timestamp history_window = kSecondsPerDay;
  double kappa_bin_width = 5.0;
  double true_fatigue_bin_width = 1.0;
};

inline void validate(const ExperimentConfig& c) {
  sim::validate(c.env);
  validate(c.policy);
  if (c.days < 1) throw ConfigError("days", "must be >= 1");
  if (c.pre_days < 0) throw ConfigError("pre_days", "must be >= 0");
  if (c.history_window <= 0) throw ConfigError("history_window_seconds", "must be positive");
  if (!(c.kappa_bin_width > 0.0)) throw ConfigError("kappa_bin_width", "must be positive");
  if (!(c.true_fatigue_bin_width > 0.0)) throw ConfigError("true_fatigue_bin_width", "must be positive");
}

// A/B split by user id: roughly equal thirds, stable across runs.
inline Arm assign_arm(std::string_view user_id) {
  switch (murmur3_32(user_id) % 3) {
    case 0: return Arm::kFatigueAware;
    case 1: return Arm::kBaseline;
    default: return Arm::kRandom;
  }
}

inline std::vector<TrainingExample> training_examples(std::span<const ImpressionRecord> records, int hash_bits) {
  std::vector<TrainingExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    TrainingExample ex;
    ex.z = candidate_features(r.context_vector(), r.chosen(), hash_bits).combined();
    ex.kappa = r.kappa();
    ex.label = r.click;
    ex.creative_id = r.chosen();
    out.push_back(std::move(ex));
  }
  return out;
}

// End-of-day update from one day of an arm's own logs: negative
// down-sampling, then a warm-started batch fit. An empty batch leaves the
// posterior unchanged.
inline ModelPosterior daily_update(const ModelPosterior& previous, std::span<const ImpressionRecord> day_records,
                                   const PolicyConfig& cfg, std::uint64_t seed) {
  const auto all = training_examples(day_records, previous.hash_bits());
  const auto kept = downsample(all, cfg.negative_rate, Rng::splitmix(seed ^ 0x5151));
  if (kept.empty()) return previous;
  TrainConfig tc = cfg.train;
  tc.seed = Rng::splitmix(seed ^ 0x7a7a);
  return train_batch(kept, tc, previous);
}

struct ExperimentResult {
  std::vector<ImpressionRecord> log;      // experiment period, all arms
  std::vector<ImpressionRecord> pre_log;  // pre-period
  MetricsReport report;
  std::map<Arm, ModelPosterior> posteriors;  // final FA and Baseline posteriors
  std::vector<Creative> catalog;
  SimilarityIndex similarity;
  double peak_fatigue = 0.0;
};

// Runs the pre-period and then the three-arm experiment, one simulated day
// at a time. Posteriors are updated at each day boundary from the previous
// day's logs of their own arm; the FA posterior is initialised from the
// pre-period logs of the existing policy.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  Rng master(cfg.seed);
  const std::uint64_t world_seed = master();
  const std::uint64_t arrival_seed = master();
  Rng outcome_rng(master());
  const std::uint64_t decision_seed = master();
  const std::uint64_t train_seed = master();

  const int total_days = cfg.pre_days + cfg.days;
  const sim::World world = sim::build_world(cfg.env, total_days, world_seed);
  const auto impressions = sim::generate_impressions(world, arrival_seed);
  sim::Environment env(world);
  HistoryStore history(cfg.history_window);

  const PolicyConfig& pc = cfg.policy;
  ModelPosterior existing(pc.hash_bits, Mode::kBaseline, pc.train.lambda);
  ModelPosterior fa(pc.hash_bits, Mode::kFatigueAware, pc.train.lambda);
  ModelPosterior baseline = existing;

  ExperimentResult res;
  res.catalog = world.catalog;
  res.similarity = world.engine_similarity;
  res.peak_fatigue = world.truth.peak_fatigue();

  std::vector<Arm> user_arm;
  for (const auto& u : world.users) user_arm.push_back(assign_arm(u.user_id));

  std::size_t next = 0;
  std::uint64_t decision_counter = 0;
  for (int day = 0; day < total_days; ++day) {
    const bool pre = day < cfg.pre_days;
    const Timestamp day_end = static_cast<Timestamp>(day + 1) * kSecondsPerDay;
    auto& sink = pre ? res.pre_log : res.log;
    const std::size_t day_begin = sink.size();
    for (; next < impressions.size() && impressions[next].t < day_end; ++next) {
      const auto& imp = impressions[next];
      const auto& user = world.users[imp.user];
      const auto& cands = *imp.candidates;
      const auto& sim = world.engine_similarity.at(world.campaign_ids[imp.campaign]);

      ImpressionRecord r;
      r.t = imp.t;
      r.day = day;
      r.user_id = user.user_id;
      r.campaign_id = sim.campaign_id();
      r.arm = pre ? Arm::kBaseline : user_arm[imp.user];
      r.context = world.context(imp.user, imp.t).features();
      r.candidates = imp.candidates;
      const auto h = history.get_history(user.user_id, sim.campaign_id(), imp.t);
      r.frequency = static_cast<std::uint32_t>(h.total());
      r.kappas = fatigue(h, sim, cands);

      const std::uint64_t dseed = Rng::splitmix(decision_seed + decision_counter++);
      Rng rng(dseed);
      if (r.arm == Arm::kRandom) {
        r.chosen_index = static_cast<std::uint32_t>(rng.uniform_index(cands.size()));
      } else {
        const bool is_fa = r.arm == Arm::kFatigueAware;
        const ModelPosterior& post = pre ? existing : (is_fa ? fa : baseline);
        const auto d = select_with_kappa(ContextVector(r.context), cands, r.kappas,
                                         is_fa ? Mode::kFatigueAware : Mode::kBaseline, post, pc.alpha, rng);
        r.chosen_index = static_cast<std::uint32_t>(d.chosen_index);
      }

      const auto o = env.step(imp.user, r.chosen(), imp.t, outcome_rng);
      r.click = o.click;
      r.conversion = o.conversion;
      r.conversion_type = !o.conversion ? ConversionType::kNone
                          : o.post_click ? ConversionType::kPostClick
                                         : ConversionType::kPostImpression;
      r.f_true = o.f_true;
      history.record_exposure(user.user_id, sim.campaign_id(), r.chosen(), imp.t);
      sink.push_back(std::move(r));
    }

    const std::span<const ImpressionRecord> today(sink.data() + day_begin, sink.size() - day_begin);
    const std::uint64_t tseed = Rng::splitmix(train_seed + static_cast<std::uint64_t>(day));
    if (pre) {
      existing = daily_update(existing, today, pc, tseed);
      fa = daily_update(fa, today, pc, Rng::splitmix(tseed + 1));
      baseline = existing;
    } else {
      std::vector<ImpressionRecord> fa_day, base_day;
      for (const auto& r : today) {
        if (r.arm == Arm::kFatigueAware) fa_day.push_back(r);
        if (r.arm == Arm::kBaseline) base_day.push_back(r);
      }
      fa = daily_update(fa, fa_day, pc, Rng::splitmix(tseed + 1));
      baseline = daily_update(baseline, base_day, pc, Rng::splitmix(tseed + 2));
    }
    history.purge_expired(day_end);
  }

  res.report = compute_metrics(res.log);
  res.posteriors.emplace(Arm::kFatigueAware, std::move(fa));
  res.posteriors.emplace(Arm::kBaseline, std::move(baseline));
  return res;
}

// Re-derives the experiment-period posteriors of the FA and Baseline arms
// from a log, using only each arm's own records. Starting points are the
// posteriors in effect when the experiment began.
inline std::map<Arm, ModelPosterior> retrain_from_log(std::span<const ImpressionRecord> log,
                                                      const std::map<Arm, ModelPosterior>& start,
                                                      const PolicyConfig& pc, std::uint64_t seed) {
  std::map<Arm, ModelPosterior> out(start);
  std::map<std::pair<Arm, int>, std::vector<ImpressionRecord>> by_day;
  for (const auto& r : log)
    if (r.arm != Arm::kRandom) by_day[{r.arm, r.day}].push_back(r);
  for (auto& [key, records] : by_day) {
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
      return a.t != b.t ? a.t < b.t : a.user_id < b.user_id;
    });
    auto& post = out.at(key.first);
    post = daily_update(post, records, pc, Rng::splitmix(seed + static_cast<std::uint64_t>(key.second) * 3 +
                                                         static_cast<std::uint64_t>(key.first)));
  }
  return out;
}

}  // namespace adfatigue
