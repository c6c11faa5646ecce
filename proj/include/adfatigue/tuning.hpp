#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/experiment.hpp"
#include "adfatigue/replay.hpp"

namespace adfatigue {

// Parameter grid for offline replay tuning. Each (alpha, lambda, mode) point
// is trained on the earliest `train_fraction` of the Random-arm records and
// replayed on the rest. Mode "logged" replays the logged choices and
// "random" a uniform choice; neither uses alpha or lambda.
struct ReplayConfig {
  std::vector<double> alphas = {0.01};
  std::vector<double> lambdas = {0.0011};
  std::vector<std::string> modes = {"baseline", "fa"};
  double train_fraction = 0.5;
  std::uint64_t seed = 7;
};

inline void validate(const ReplayConfig& rc) {
  if (rc.alphas.empty()) throw ConfigError("replay.alphas", "must be nonempty");
  if (rc.lambdas.empty()) throw ConfigError("replay.lambdas", "must be nonempty");
  if (rc.modes.empty()) throw ConfigError("replay.modes", "must be nonempty");
  for (double a : rc.alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("replay.alphas", "values must be in [0, 1]");
  for (double l : rc.lambdas)
    if (!(l > 0.0)) throw ConfigError("replay.lambdas", "values must be positive");
  for (const auto& m : rc.modes)
    if (m != "baseline" && m != "fa" && m != "logged" && m != "random")
      throw ConfigError("replay.modes", "unknown mode '" + m + "'");
  if (!(rc.train_fraction > 0.0 && rc.train_fraction < 1.0))
    throw ConfigError("replay.train_fraction", "must be in (0, 1)");
}

struct ReplayGridRow {
  std::string mode;
  std::optional<double> alpha;
  std::optional<double> lambda;
  ReplayEstimate estimate;
};

// Random-arm records of `log`, ordered by time.
inline std::vector<ImpressionRecord> random_arm_records(std::span<const ImpressionRecord> log) {
  std::vector<ImpressionRecord> out;
  for (const auto& r : log)
    if (r.arm == Arm::kRandom) out.push_back(r);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

inline std::vector<ReplayGridRow> replay_grid(std::span<const ImpressionRecord> log, const ReplayConfig& rc,
                                              const PolicyConfig& pc) {
  validate(rc);
  const auto records = random_arm_records(log);
  if (records.empty()) throw DataError("log holds no Random-arm records");
  const auto split = static_cast<std::size_t>(rc.train_fraction * static_cast<double>(records.size()));
  const std::span<const ImpressionRecord> train(records.data(), split);
  const std::span<const ImpressionRecord> eval(records.data() + split, records.size() - split);
  if (eval.empty()) throw DataError("nothing left to replay after the training split");

  std::vector<ReplayGridRow> rows;
  for (const auto& m : rc.modes) {
    if (m == "logged" || m == "random") {
      ReplayGridRow row{m, std::nullopt, std::nullopt, {}};
      row.estimate = replay_evaluate(eval, m == "logged" ? logged_policy() : uniform_policy(), rc.seed);
      rows.push_back(row);
      continue;
    }
    const Mode mode = parse_mode(m);
    for (double lambda : rc.lambdas) {
      PolicyConfig p = pc;
      p.train.lambda = lambda;
      const ModelPosterior post =
          daily_update(ModelPosterior(p.hash_bits, mode, lambda), train, p, Rng::splitmix(rc.seed));
      for (double alpha : rc.alphas) {
        ReplayGridRow row{m, alpha, lambda, {}};
        row.estimate = replay_evaluate(eval, thompson_policy(post, alpha), rc.seed);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace adfatigue
