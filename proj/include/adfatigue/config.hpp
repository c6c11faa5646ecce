#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adfatigue/errors.hpp"
#include "adfatigue/experiment.hpp"
#include "adfatigue/tuning.hpp"

namespace adfatigue {

struct RunConfig {
  ExperimentConfig experiment;
  ReplayConfig replay;
  std::string out_dir = "out";
};

namespace detail {

// Reads fields of one JSON object, remembering which keys were used so that
// unknown (misspelled) keys can be reported.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(field(k.c_str()), "unknown key");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void apply_json(const nlohmann::json& j, sim::CampaignSpec& c, const std::string& path) {
  detail::FieldReader r(j, path);
  r.get("id", c.id);
  r.get("n_creatives", c.n_creatives);
  r.get("user_share", c.user_share);
  r.get("n_families", c.n_families);
  r.get("theme_pool", c.theme_pool);
  r.get("theme_tokens", c.theme_tokens);
  r.get("family_tokens", c.family_tokens);
  r.get("own_tokens", c.own_tokens);
  r.get("image_shared_weight", c.image_shared_weight);
  r.get("late_creatives", c.late_creatives);
  r.get("retired_creatives", c.retired_creatives);
  r.finish();
}

inline void apply_json(const nlohmann::json& j, sim::EnvConfig& e) {
  detail::FieldReader r(j, "env");
  if (r.has("campaigns")) {
    const auto& arr = r.at("campaigns");
    if (!arr.is_array()) throw ConfigError("env.campaigns", "expected an array");
    e.campaigns.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      sim::CampaignSpec c;
      apply_json(arr[i], c, "env.campaigns[" + std::to_string(i) + "]");
      e.campaigns.push_back(c);
    }
  }
  r.get("n_users", e.n_users);
  r.get("mean_daily_impressions", e.mean_daily_impressions);
  r.get("rate_dispersion", e.rate_dispersion);
  r.get("session_mean_length", e.session_mean_length);
  r.get("session_gap_seconds", e.session_gap_seconds);
  r.get("hour_bucket_hours", e.hour_bucket_hours);
  r.get("devices", e.devices);
  r.get("device_weights", e.device_weights);
  r.get("n_sites", e.n_sites);
  r.get("n_ssps", e.n_ssps);
  r.get("embedding_dim", e.embedding_dim);
  r.get("base_logit", e.base_logit);
  r.get("appeal_sd", e.appeal_sd);
  r.get("context_effect_sd", e.context_effect_sd);
  r.get("user_sd", e.user_sd);
  r.get("wear_in", e.wear_in);
  r.get("wear_out", e.wear_out);
  r.get("similarity_noise_sd", e.similarity_noise_sd);
  r.get("true_window_seconds", e.true_window_seconds);
  r.get("conv_intercept", e.conv_intercept);
  r.get("conv_fatigue", e.conv_fatigue);
  r.get("view_through", e.view_through);
  r.get("late_day", e.late_day);
  r.get("retire_day", e.retire_day);
  r.finish();
}

inline void apply_json(const nlohmann::json& j, PolicyConfig& p) {
  detail::FieldReader r(j, "policy");
  r.get("hash_bits", p.hash_bits);
  r.get("alpha", p.alpha);
  r.get("negative_rate", p.negative_rate);
  r.get("lambda", p.train.lambda);
  r.get("epochs", p.train.epochs);
  r.get("eta0", p.train.eta0);
  r.get("power_t", p.train.power_t);
  r.get("decay_steps", p.train.decay_steps);
  r.finish();
}

inline void apply_json(const nlohmann::json& j, ReplayConfig& rc) {
  detail::FieldReader r(j, "replay");
  r.get("alphas", rc.alphas);
  r.get("lambdas", rc.lambdas);
  r.get("modes", rc.modes);
  r.get("train_fraction", rc.train_fraction);
  r.get("seed", rc.seed);
  r.finish();
}

inline void validate(const RunConfig& c) {
  validate(c.experiment);
  validate(c.replay);
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::FieldReader r(j, "");
  auto& x = c.experiment;
  r.get("seed", x.seed);
  r.get("days", x.days);
  r.get("pre_days", x.pre_days);
  r.get("history_window_seconds", x.history_window);
  r.get("kappa_bin_width", x.kappa_bin_width);
  r.get("true_fatigue_bin_width", x.true_fatigue_bin_width);
  r.get("out_dir", c.out_dir);
  if (r.has("policy")) apply_json(r.at("policy"), x.policy);
  if (r.has("env")) apply_json(r.at("env"), x.env);
  if (r.has("replay")) apply_json(r.at("replay"), c.replay);
  r.finish();
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
  }
  return parse_run_config(j);
}

// Effective configuration with every field spelled out.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const auto& x = c.experiment;
  j["seed"] = x.seed;
  j["days"] = x.days;
  j["pre_days"] = x.pre_days;
  j["history_window_seconds"] = x.history_window;
  j["kappa_bin_width"] = x.kappa_bin_width;
  j["true_fatigue_bin_width"] = x.true_fatigue_bin_width;
  j["out_dir"] = c.out_dir;
  const auto& p = x.policy;
  j["policy"] = {{"hash_bits", p.hash_bits},       {"alpha", p.alpha},
                 {"negative_rate", p.negative_rate}, {"lambda", p.train.lambda},
                 {"epochs", p.train.epochs},         {"eta0", p.train.eta0},
                 {"power_t", p.train.power_t},       {"decay_steps", p.train.decay_steps}};
  const auto& e = x.env;
  nlohmann::ordered_json env;
  nlohmann::ordered_json camps = nlohmann::ordered_json::array();
  for (const auto& cs : e.campaigns) {
    nlohmann::ordered_json cj;
    cj["id"] = cs.id;
    cj["n_creatives"] = cs.n_creatives;
    cj["user_share"] = cs.user_share;
    cj["n_families"] = cs.n_families;
    cj["theme_pool"] = cs.theme_pool;
    cj["theme_tokens"] = cs.theme_tokens;
    cj["family_tokens"] = cs.family_tokens;
    cj["own_tokens"] = cs.own_tokens;
    cj["image_shared_weight"] = cs.image_shared_weight;
    cj["late_creatives"] = cs.late_creatives;
    cj["retired_creatives"] = cs.retired_creatives;
    camps.push_back(cj);
  }
  env["campaigns"] = camps;
  env["n_users"] = e.n_users;
  env["mean_daily_impressions"] = e.mean_daily_impressions;
  env["rate_dispersion"] = e.rate_dispersion;
  env["session_mean_length"] = e.session_mean_length;
  env["session_gap_seconds"] = e.session_gap_seconds;
  env["hour_bucket_hours"] = e.hour_bucket_hours;
  env["devices"] = e.devices;
  env["device_weights"] = e.device_weights;
  env["n_sites"] = e.n_sites;
  env["n_ssps"] = e.n_ssps;
  env["embedding_dim"] = e.embedding_dim;
  env["base_logit"] = e.base_logit;
  env["appeal_sd"] = e.appeal_sd;
  env["context_effect_sd"] = e.context_effect_sd;
  env["user_sd"] = e.user_sd;
  env["wear_in"] = e.wear_in;
  env["wear_out"] = e.wear_out;
  env["similarity_noise_sd"] = e.similarity_noise_sd;
  env["true_window_seconds"] = e.true_window_seconds;
  env["conv_intercept"] = e.conv_intercept;
  env["conv_fatigue"] = e.conv_fatigue;
  env["view_through"] = e.view_through;
  env["late_day"] = e.late_day;
  env["retire_day"] = e.retire_day;
  j["env"] = env;
  const auto& rp = c.replay;
  j["replay"] = {{"alphas", rp.alphas},
                 {"lambdas", rp.lambdas},
                 {"modes", rp.modes},
                 {"train_fraction", rp.train_fraction},
                 {"seed", rp.seed}};
  return j;
}

}  // namespace adfatigue
