#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/features.hpp"
#include "adfatigue/history.hpp"
#include "adfatigue/reward_model.hpp"
#include "adfatigue/rng.hpp"
#include "adfatigue/similarity.hpp"

namespace adfatigue::sim {

// Shape of one synthetic campaign and of its creative texts/images.
//
// Every creative carries `theme_tokens` words drawn from a campaign-wide pool
// of `theme_pool` words, the `family_tokens` words of its family (creatives
// are dealt round-robin into `n_families` message families) and
// `own_tokens` unique words. Image embeddings are nonnegative and mix a
// campaign-wide base vector with weight `image_shared_weight`.
struct CampaignSpec {
  std::string id;
  int n_creatives = 1;
  double user_share = 1.0;
  int n_families = 1;
  int theme_pool = 10;
  int theme_tokens = 3;
  int family_tokens = 3;
  int own_tokens = 3;
  double image_shared_weight = 0.5;
  int late_creatives = 0;     // enter rotation at EnvConfig::late_day
  int retired_creatives = 0;  // leave rotation at EnvConfig::retire_day
};

struct EnvConfig {
  std::vector<CampaignSpec> campaigns = default_campaigns();

  // Users and arrivals.
  int n_users = 2250;
  double mean_daily_impressions = 20.0;
  double rate_dispersion = 0.3;     // sd of the log daily rate
  double session_mean_length = 3.0;  // impressions per session
  double session_gap_seconds = 40.0;
  int hour_bucket_hours = 1;
  std::vector<std::string> devices = {"ios", "android", "web"};
  std::vector<double> device_weights = {0.45, 0.45, 0.10};
  int n_sites = 8;
  int n_ssps = 3;
  int embedding_dim = 16;

  // Ground-truth click model:
  //   logit = base_logit + appeal(a) + effect(a, device) + effect(a, site) + u_i
  //           + wear_in * F - wear_out * F^2
  double base_logit = -2.5;
  double appeal_sd = 0.8;
  double context_effect_sd = 0.3;
  double user_sd = 0.3;
  double wear_in = 0.4;
  double wear_out = 0.05;
  double similarity_noise_sd = 0.05;
  Timestamp true_window_seconds = kSecondsPerDay;  // 0 keeps every exposure

  // Conversions: after a click with prob sigmoid(conv_intercept + conv_fatigue * F),
  // otherwise (view-through) with prob view_through.
  double conv_intercept = -1.5;
  double conv_fatigue = 0.05;
  double view_through = 0.002;

  int late_day = 3;
  int retire_day = 6;

  static std::vector<CampaignSpec> default_campaigns() {
    return {
        {"A", 21, 0.25, 3, 8, 3, 3, 0, 0.80, 1, 1},
        {"B", 12, 0.40, 7, 6, 3, 1, 2, 0.60, 1, 1},
        {"C", 5, 0.35, 1, 16, 2, 3, 6, 0.20, 1, 0},
    };
  }
};

inline void validate(const EnvConfig& c) {
  if (c.campaigns.empty()) throw ConfigError("env.campaigns", "at least one campaign is required");
  for (const auto& cs : c.campaigns) {
    if (!text::is_valid_id(cs.id)) throw ConfigError("env.campaigns.id", "invalid campaign id");
    if (cs.n_creatives < 1) throw ConfigError("env.campaigns.n_creatives", "must be >= 1");
    if (!(cs.user_share > 0.0)) throw ConfigError("env.campaigns.user_share", "must be positive");
    if (cs.n_families < 1) throw ConfigError("env.campaigns.n_families", "must be >= 1");
    if (cs.theme_tokens < 0 || cs.family_tokens < 0 || cs.own_tokens < 0)
      throw ConfigError("env.campaigns.tokens", "token counts must be >= 0");
    if (cs.theme_tokens > cs.theme_pool) throw ConfigError("env.campaigns.theme_tokens", "exceeds theme_pool");
    if (!(cs.image_shared_weight >= 0.0 && cs.image_shared_weight <= 1.0))
      throw ConfigError("env.campaigns.image_shared_weight", "must be in [0, 1]");
    if (cs.late_creatives < 0 || cs.retired_creatives < 0 || cs.late_creatives + cs.retired_creatives > cs.n_creatives)
      throw ConfigError("env.campaigns.late_creatives", "late + retired creatives exceed n_creatives");
  }
  if (c.n_users < 1) throw ConfigError("env.n_users", "must be >= 1");
  if (!(c.mean_daily_impressions > 0.0)) throw ConfigError("env.mean_daily_impressions", "must be positive");
  if (!(c.rate_dispersion >= 0.0)) throw ConfigError("env.rate_dispersion", "must be >= 0");
  if (!(c.session_mean_length >= 1.0)) throw ConfigError("env.session_mean_length", "must be >= 1");
  if (!(c.session_gap_seconds >= 0.0)) throw ConfigError("env.session_gap_seconds", "must be >= 0");
  if (c.hour_bucket_hours < 1 || 24 % c.hour_bucket_hours != 0)
    throw ConfigError("env.hour_bucket_hours", "must divide 24");
  if (c.devices.empty() || c.devices.size() != c.device_weights.size())
    throw ConfigError("env.device_weights", "must match devices");
  if (c.n_sites < 1) throw ConfigError("env.n_sites", "must be >= 1");
  if (c.n_ssps < 1) throw ConfigError("env.n_ssps", "must be >= 1");
  if (c.embedding_dim < 0) throw ConfigError("env.embedding_dim", "must be >= 0");
  if (!(c.wear_in > 0.0)) throw ConfigError("env.wear_in", "must be positive");
  if (!(c.wear_out > 0.0)) throw ConfigError("env.wear_out", "must be positive");
  if (!(c.similarity_noise_sd >= 0.0)) throw ConfigError("env.similarity_noise_sd", "must be >= 0");
  if (c.true_window_seconds < 0) throw ConfigError("env.true_window_seconds", "must be >= 0");
  if (!(c.view_through >= 0.0 && c.view_through <= 1.0)) throw ConfigError("env.view_through", "must be in [0, 1]");
}

struct SimUser {
  std::string user_id;
  std::uint32_t campaign = 0;
  std::string device;
  std::string site;
  std::string ssp;
  double responsiveness = 0.0;  // u_i
  double daily_rate = 0.0;      // expected impressions per day
};

struct TrueCreative {
  std::uint32_t campaign = 0;
  std::uint32_t local = 0;  // index within the campaign's similarity matrices
  double appeal = 0.0;
  std::vector<double> device_effect;
  std::vector<double> site_effect;
};

// Ground-truth response model. The true similarity matrices are the engine's
// estimates perturbed by symmetric noise.
struct GroundTruth {
  std::vector<TrueCreative> creatives;              // parallel to World::catalog
  std::vector<std::vector<double>> true_similarity;  // per campaign, row-major
  double base_logit = 0.0;
  double wear_in = 0.0;
  double wear_out = 0.0;
  double conv_intercept = 0.0;
  double conv_fatigue = 0.0;
  double view_through = 0.0;

  // Fatigue level at which the true click logit peaks.
  double peak_fatigue() const { return wear_in / (2.0 * wear_out); }
};

struct World {
  EnvConfig config;
  std::vector<Creative> catalog;
  SimilarityIndex engine_similarity;
  GroundTruth truth;
  std::vector<SimUser> users;
  std::vector<std::string> campaign_ids;
  std::unordered_map<std::string, std::uint32_t> creative_index;  // id -> catalog position
  std::vector<std::uint32_t> device_index;                        // per user
  std::vector<std::uint32_t> site_index;                          // per user
  Timestamp horizon = 0;

  const TrueCreative& creative(std::string_view id) const {
    auto it = creative_index.find(std::string(id));
    if (it == creative_index.end()) throw DataError("unknown creative " + std::string(id));
    return truth.creatives[it->second];
  }

  ContextVector context(std::uint32_t user, Timestamp t) const {
    const auto& u = users[user];
    const int hour = static_cast<int>((t % kSecondsPerDay) / 3600);
    const int bucket = hour / config.hour_bucket_hours * config.hour_bucket_hours;
    return ContextVector({std::string(kBiasFeature), "device=" + u.device, "site=" + u.site, "ssp=" + u.ssp,
                          "hour=" + std::to_string(bucket)});
  }
};

namespace detail {

inline std::size_t draw_categorical(Rng& rng, const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  return w.size() - 1;
}

}  // namespace detail

inline std::vector<Creative> generate_catalog(const EnvConfig& c, Timestamp horizon, Rng& rng) {
  std::vector<Creative> out;
  for (const auto& cs : c.campaigns) {
    std::vector<double> base(c.embedding_dim);
    for (double& x : base) x = std::max(0.0, rng.normal());
    for (int j = 0; j < cs.n_creatives; ++j) {
      Creative cr;
      char buf[16];
      std::snprintf(buf, sizeof buf, "%02d", j + 1);
      cr.creative_id = cs.id + "-" + buf;
      cr.campaign_id = cs.id;
      // Theme words without replacement.
      std::vector<int> pool(cs.theme_pool);
      for (int k = 0; k < cs.theme_pool; ++k) pool[k] = k;
      for (int k = 0; k < cs.theme_tokens; ++k) {
        std::swap(pool[k], pool[k + rng.uniform_index(cs.theme_pool - k)]);
        ++cr.tokens[cs.id + "_theme" + std::to_string(pool[k])];
      }
      const int fam = j % cs.n_families;
      for (int k = 0; k < cs.family_tokens; ++k)
        ++cr.tokens[cs.id + "_fam" + std::to_string(fam) + "_" + std::to_string(k)];
      for (int k = 0; k < cs.own_tokens; ++k) ++cr.tokens[cr.creative_id + "_w" + std::to_string(k)];
      cr.image_embedding.resize(c.embedding_dim);
      for (int d = 0; d < c.embedding_dim; ++d) {
        cr.image_embedding[d] =
            cs.image_shared_weight * base[d] + (1.0 - cs.image_shared_weight) * std::max(0.0, rng.normal());
      }
      cr.active_from = 0;
      cr.active_until = horizon;
      // The last creatives of the campaign are the late entrants, the ones
      // just before them are retired early.
      if (j >= cs.n_creatives - cs.late_creatives) cr.active_from = c.late_day * kSecondsPerDay;
      else if (j >= cs.n_creatives - cs.late_creatives - cs.retired_creatives)
        cr.active_until = c.retire_day * kSecondsPerDay;
      if (cr.active_from >= cr.active_until) cr.active_from = 0;
      out.push_back(std::move(cr));
    }
  }
  return out;
}

inline World build_world(const EnvConfig& c, int horizon_days, std::uint64_t seed) {
  validate(c);
  if (horizon_days < 1) throw ConfigError("days", "must be >= 1");
  Rng master(seed);
  Rng catalog_rng = master.fork(1);
  Rng truth_rng = master.fork(2);
  Rng user_rng = master.fork(3);

  World w;
  w.config = c;
  w.horizon = horizon_days * kSecondsPerDay;
  w.catalog = generate_catalog(c, w.horizon, catalog_rng);
  w.engine_similarity = build_similarity_index(w.catalog);
  for (const auto& cs : c.campaigns) w.campaign_ids.push_back(cs.id);

  auto& gt = w.truth;
  gt.base_logit = c.base_logit;
  gt.wear_in = c.wear_in;
  gt.wear_out = c.wear_out;
  gt.conv_intercept = c.conv_intercept;
  gt.conv_fatigue = c.conv_fatigue;
  gt.view_through = c.view_through;

  for (std::uint32_t k = 0; k < c.campaigns.size(); ++k) {
    const auto& m = w.engine_similarity.at(c.campaigns[k].id);
    const std::size_t n = m.size();
    std::vector<double> s(m.values().begin(), m.values().end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = std::clamp(s[i * n + j] + c.similarity_noise_sd * truth_rng.normal(), 0.0, 1.0);
        s[i * n + j] = v;
        s[j * n + i] = v;
      }
    }
    gt.true_similarity.push_back(std::move(s));
  }

  for (std::uint32_t i = 0; i < w.catalog.size(); ++i) {
    const auto& cr = w.catalog[i];
    w.creative_index.emplace(cr.creative_id, i);
    TrueCreative tc;
    for (std::uint32_t k = 0; k < c.campaigns.size(); ++k)
      if (c.campaigns[k].id == cr.campaign_id) tc.campaign = k;
    tc.local = static_cast<std::uint32_t>(*w.engine_similarity.at(cr.campaign_id).index_of(cr.creative_id));
    tc.appeal = c.appeal_sd * truth_rng.normal();
    for (std::size_t d = 0; d < c.devices.size(); ++d) tc.device_effect.push_back(c.context_effect_sd * truth_rng.normal());
    for (int s = 0; s < c.n_sites; ++s) tc.site_effect.push_back(c.context_effect_sd * truth_rng.normal());
    gt.creatives.push_back(std::move(tc));
  }

  std::vector<double> shares;
  for (const auto& cs : c.campaigns) shares.push_back(cs.user_share);
  for (int u = 0; u < c.n_users; ++u) {
    SimUser su;
    char buf[24];
    std::snprintf(buf, sizeof buf, "u%06d", u);
    su.user_id = buf;
    su.campaign = static_cast<std::uint32_t>(detail::draw_categorical(user_rng, shares));
    const auto dev = detail::draw_categorical(user_rng, c.device_weights);
    su.device = c.devices[dev];
    const auto site = user_rng.uniform_index(c.n_sites);
    su.site = "s" + std::to_string(site);
    su.ssp = "x" + std::to_string(user_rng.uniform_index(c.n_ssps));
    su.responsiveness = c.user_sd * user_rng.normal();
    const double sigma = c.rate_dispersion;
    su.daily_rate = c.mean_daily_impressions * std::exp(sigma * user_rng.normal() - 0.5 * sigma * sigma);
    w.users.push_back(std::move(su));
    w.device_index.push_back(static_cast<std::uint32_t>(dev));
    w.site_index.push_back(static_cast<std::uint32_t>(site));
  }
  return w;
}

struct Impression {
  Timestamp t = 0;
  std::uint32_t user = 0;
  std::uint32_t campaign = 0;
  std::shared_ptr<const std::vector<std::string>> candidates;
};

// Active creatives of every campaign over time, as shared candidate lists.
class CandidateSchedule {
 public:
  explicit CandidateSchedule(const World& w) {
    per_campaign_.resize(w.campaign_ids.size());
    for (std::uint32_t k = 0; k < w.campaign_ids.size(); ++k) {
      std::vector<Timestamp> cuts{0};
      for (const auto& cr : w.catalog) {
        if (cr.campaign_id != w.campaign_ids[k]) continue;
        if (cr.active_from > 0 && cr.active_from < w.horizon) cuts.push_back(cr.active_from);
        if (cr.active_until > 0 && cr.active_until < w.horizon) cuts.push_back(cr.active_until);
      }
      std::sort(cuts.begin(), cuts.end());
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
      for (Timestamp start : cuts) {
        auto ids = std::make_shared<std::vector<std::string>>();
        for (const auto& cr : w.catalog)
          if (cr.campaign_id == w.campaign_ids[k] && cr.active_at(start)) ids->push_back(cr.creative_id);
        if (ids->empty()) {
          throw ConfigError("schedule", "campaign " + w.campaign_ids[k] + " has no active creative at t=" +
                                            std::to_string(start));
        }
        per_campaign_[k].push_back({start, std::move(ids)});
      }
    }
  }

  std::shared_ptr<const std::vector<std::string>> at(std::uint32_t campaign, Timestamp t) const {
    const auto& segs = per_campaign_[campaign];
    auto it = std::upper_bound(segs.begin(), segs.end(), t,
                               [](Timestamp x, const Segment& s) { return x < s.start; });
    return std::prev(it)->ids;
  }

 private:
  struct Segment {
    Timestamp start;
    std::shared_ptr<const std::vector<std::string>> ids;
  };
  std::vector<std::vector<Segment>> per_campaign_;
};

// Time-ordered impression opportunities over [0, horizon). Each user sees
// sessions arriving as a Poisson process; a session holds a geometric number
// of impressions (mean session_mean_length) separated by exponential gaps.
inline std::vector<Impression> generate_impressions(const World& w, std::uint64_t seed) {
  const auto& c = w.config;
  const CandidateSchedule schedule(w);
  Rng master(seed);
  std::vector<Impression> out;
  const double days = static_cast<double>(w.horizon) / kSecondsPerDay;
  const double cont = (c.session_mean_length - 1.0) / c.session_mean_length;
  for (std::uint32_t u = 0; u < w.users.size(); ++u) {
    Rng rng = master.fork(u);
    const std::uint64_t sessions = rng.poisson(w.users[u].daily_rate / c.session_mean_length * days);
    for (std::uint64_t s = 0; s < sessions; ++s) {
      double t = rng.uniform() * static_cast<double>(w.horizon);
      do {
        if (t >= static_cast<double>(w.horizon)) break;
        out.push_back({static_cast<Timestamp>(t), u, w.users[u].campaign, nullptr});
        t += rng.exponential(c.session_gap_seconds);
      } while (rng.uniform() < cont);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Impression& a, const Impression& b) {
    return a.t != b.t ? a.t < b.t : a.user < b.user;
  });
  for (auto& imp : out) imp.candidates = schedule.at(imp.campaign, imp.t);
  return out;
}

inline double true_click_logit(const GroundTruth& gt, const TrueCreative& cr, std::uint32_t device,
                               std::uint32_t site, double responsiveness, double f_true) {
  return gt.base_logit + cr.appeal + cr.device_effect[device] + cr.site_effect[site] + responsiveness +
         gt.wear_in * f_true - gt.wear_out * f_true * f_true;
}

struct Outcome {
  bool click = false;
  bool conversion = false;
  bool post_click = false;  // meaningful when conversion is true
  double f_true = 0.0;
  std::uint32_t true_exposures = 0;  // exposures counted by the ground truth before this one
};

// Mutable ground-truth state: every exposure of every user, without minute
// deduplication, trimmed to the configured true window.
class Environment {
 public:
  explicit Environment(const World& w) : world_(&w), exposures_(w.users.size()) {}

  double true_fatigue(std::uint32_t user, std::string_view creative_id, Timestamp t) {
    const auto& cr = world_->creative(creative_id);
    trim(user, t);
    const auto& sim = world_->truth.true_similarity[cr.campaign];
    const std::size_t n = static_cast<std::size_t>(std::sqrt(static_cast<double>(sim.size())) + 0.5);
    double f = 0.0;
    for (const auto& e : exposures_[user]) f += sim[cr.local * n + e.local];
    return f;
  }

  double click_probability(std::uint32_t user, std::string_view creative_id, double f_true) const {
    const auto& cr = world_->creative(creative_id);
    return sigmoid(true_click_logit(world_->truth, cr, world_->device_index[user], world_->site_index[user],
                                    world_->users[user].responsiveness, f_true));
  }

  Outcome step(std::uint32_t user, std::string_view creative_id, Timestamp t, Rng& rng) {
    const auto& cr = world_->creative(creative_id);
    Outcome o;
    o.f_true = true_fatigue(user, creative_id, t);
    o.true_exposures = static_cast<std::uint32_t>(exposures_[user].size());
    o.click = rng.bernoulli(click_probability(user, creative_id, o.f_true));
    const auto& gt = world_->truth;
    if (o.click) {
      o.conversion = rng.bernoulli(sigmoid(gt.conv_intercept + gt.conv_fatigue * o.f_true));
      o.post_click = o.conversion;
    } else {
      o.conversion = rng.bernoulli(gt.view_through);
    }
    exposures_[user].push_back({t, cr.local});
    return o;
  }

  // Exposures the ground truth currently counts for `user` at time t.
  std::size_t exposure_count(std::uint32_t user, Timestamp t) {
    trim(user, t);
    return exposures_[user].size();
  }

 private:
  struct Exposure {
    Timestamp t;
    std::uint32_t local;
  };

  void trim(std::uint32_t user, Timestamp t) {
    const Timestamp window = world_->config.true_window_seconds;
    if (window <= 0) return;
    auto& q = exposures_[user];
    while (!q.empty() && q.front().t <= t - window) q.pop_front();
  }

  const World* world_;
  std::vector<std::deque<Exposure>> exposures_;
};

}  // namespace adfatigue::sim
