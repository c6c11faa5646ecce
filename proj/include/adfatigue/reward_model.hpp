#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adfatigue/errors.hpp"
#include "adfatigue/features.hpp"
#include "adfatigue/rng.hpp"
#include "adfatigue/text.hpp"

namespace adfatigue {

enum class Mode { kBaseline, kFatigueAware };

inline std::string_view to_string(Mode m) { return m == Mode::kBaseline ? "baseline" : "fa"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "baseline") return Mode::kBaseline;
  if (s == "fa") return Mode::kFatigueAware;
  throw ConfigError("mode", "expected 'baseline' or 'fa', got '" + std::string(s) + "'");
}

inline double sigmoid(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

// log(1 + exp(m)) without overflow.
inline double softplus(double m) { return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

inline std::uint64_t base_dimension(int hash_bits) { return std::uint64_t{1} << hash_bits; }
inline std::uint32_t kappa_index(int hash_bits) { return static_cast<std::uint32_t>(base_dimension(hash_bits)); }
inline std::uint32_t kappa_sq_index(int hash_bits) { return kappa_index(hash_bits) + 1; }

inline std::uint64_t model_dimension(int hash_bits, Mode mode) {
  return base_dimension(hash_bits) + (mode == Mode::kFatigueAware ? 2 : 0);
}

struct TrainingExample {
  HashedFeatures z;  // hashed (x, a (x) x); fatigue terms are added from `kappa`
  double kappa = 0.0;
  bool label = false;
  double weight = 1.0;
  std::string creative_id;
};

// Full sparse feature vector of an example as seen by the model: z plus
// (kappa, kappa^2) at the two reserved indices in fatigue-aware mode.
inline std::vector<std::pair<std::uint32_t, double>> model_features(const TrainingExample& ex, Mode mode,
                                                                    int hash_bits) {
  auto f = ex.z.entries;
  if (mode == Mode::kFatigueAware) {
    if (ex.kappa != 0.0) {
      f.emplace_back(kappa_index(hash_bits), ex.kappa);
      f.emplace_back(kappa_sq_index(hash_bits), ex.kappa * ex.kappa);
    }
  }
  return f;
}

// Diagonal Gaussian posterior over the hashed weights. Coordinates that are
// not stored have mean 0 and variance 1/lambda.
class ModelPosterior {
 public:
  struct Coordinate {
    double mean = 0.0;
    double variance = 0.0;
    bool operator==(const Coordinate&) const = default;
  };

  ModelPosterior(int hash_bits, Mode mode, double lambda) : hash_bits_(hash_bits), mode_(mode), lambda_(lambda) {
    if (hash_bits < 1 || hash_bits > 30) throw ConfigError("hash_bits", "must be in [1, 30]");
    if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
  }

  int hash_bits() const { return hash_bits_; }
  Mode mode() const { return mode_; }
  double lambda() const { return lambda_; }
  std::uint64_t dimension() const { return model_dimension(hash_bits_, mode_); }
  double prior_variance() const { return 1.0 / lambda_; }

  double mean(std::uint32_t i) const {
    auto it = coords_.find(i);
    return it == coords_.end() ? 0.0 : it->second.mean;
  }
  double variance(std::uint32_t i) const {
    auto it = coords_.find(i);
    return it == coords_.end() ? prior_variance() : it->second.variance;
  }

  // Point estimates of the fatigue coefficients (0 in baseline mode).
  double b1() const { return mode_ == Mode::kFatigueAware ? mean(kappa_index(hash_bits_)) : 0.0; }
  double b2() const { return mode_ == Mode::kFatigueAware ? mean(kappa_sq_index(hash_bits_)) : 0.0; }

  void set(std::uint32_t i, double mean, double variance) {
    if (i >= dimension()) throw DataError("posterior index " + std::to_string(i) + " out of range");
    if (!(variance > 0.0)) throw DataError("posterior variance must be positive");
    coords_[i] = {mean, variance};
  }

  const std::unordered_map<std::uint32_t, Coordinate>& coordinates() const { return coords_; }

  bool is_available(std::string_view creative_id) const { return available_.count(creative_id) > 0; }
  void mark_available(std::string creative_id) { available_.insert(std::move(creative_id)); }
  const std::set<std::string, std::less<>>& available() const { return available_; }

  bool operator==(const ModelPosterior& o) const {
    return hash_bits_ == o.hash_bits_ && mode_ == o.mode_ && lambda_ == o.lambda_ && coords_ == o.coords_ &&
           available_ == o.available_;
  }

 private:
  int hash_bits_;
  Mode mode_;
  double lambda_;
  std::unordered_map<std::uint32_t, Coordinate> coords_;
  std::set<std::string, std::less<>> available_;
};

// Pre-sigmoid score: z . theta, plus b1*kappa + b2*kappa^2 in fatigue-aware
// mode with (b1, b2) read at the reserved indices. `theta` is any callable
// index -> weight.
template <class Weights>
double linear_score(const HashedFeatures& z, const Weights& theta, double kappa, Mode mode, int hash_bits) {
  double m = 0.0;
  for (const auto& [i, v] : z.entries) m += v * theta(i);
  if (mode == Mode::kFatigueAware) {
    m += theta(kappa_index(hash_bits)) * kappa + theta(kappa_sq_index(hash_bits)) * kappa * kappa;
  }
  return m;
}

template <class Weights>
double predict(const HashedFeatures& z, const Weights& theta, double kappa, Mode mode, int hash_bits) {
  return sigmoid(linear_score(z, theta, kappa, mode, hash_bits));
}

// Keeps every positive and each negative independently with probability
// `negative_rate`. Weights are left untouched (no recalibration).
inline std::vector<TrainingExample> downsample(std::span<const TrainingExample> examples, double negative_rate,
                                               std::uint64_t seed) {
  if (!(negative_rate > 0.0 && negative_rate <= 1.0)) throw ConfigError("negative_rate", "must be in (0, 1]");
  Rng rng(seed);
  std::vector<TrainingExample> out;
  for (const auto& ex : examples) {
    if (ex.label || negative_rate >= 1.0 || rng.bernoulli(negative_rate)) out.push_back(ex);
  }
  return out;
}

// Objective sum_t w_t * logloss(y_t, theta . z_t) + (lambda/2) ||theta||^2 on
// a dense weight vector of size model_dimension().
inline double regularized_nll(std::span<const TrainingExample> examples, std::span<const double> theta,
                              double lambda, Mode mode, int hash_bits) {
  double loss = 0.0;
  for (const auto& ex : examples) {
    double m = 0.0;
    for (const auto& [i, v] : model_features(ex, mode, hash_bits)) m += v * theta[i];
    loss += ex.weight * (ex.label ? softplus(-m) : softplus(m));
  }
  double sq = 0.0;
  for (double w : theta) sq += w * w;
  return loss + 0.5 * lambda * sq;
}

inline std::vector<double> regularized_nll_gradient(std::span<const TrainingExample> examples,
                                                    std::span<const double> theta, double lambda, Mode mode,
                                                    int hash_bits) {
  std::vector<double> g(theta.begin(), theta.end());
  for (double& x : g) x *= lambda;
  for (const auto& ex : examples) {
    const auto f = model_features(ex, mode, hash_bits);
    double m = 0.0;
    for (const auto& [i, v] : f) m += v * theta[i];
    const double r = ex.weight * (sigmoid(m) - (ex.label ? 1.0 : 0.0));
    for (const auto& [i, v] : f) g[i] += r * v;
  }
  return g;
}

// SGD settings. Step size at step t (0-based, counted over all epochs) is
//   eta0 / (1 + t / decay_steps)^power_t,
// divided by max(1, w * ||z||^2) for the example at hand so that large raw
// fatigue values (kappa^2) cannot blow up a single update.
struct TrainConfig {
  double lambda = 0.0011;
  int epochs = 1;
  double eta0 = 1.0;
  double power_t = 0.5;
  double decay_steps = 1000.0;
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& c, const std::string& prefix = "") {
  if (!(c.lambda > 0.0)) throw ConfigError(prefix + "lambda", "must be positive");
  if (c.epochs < 1) throw ConfigError(prefix + "epochs", "must be >= 1");
  if (!(c.eta0 > 0.0)) throw ConfigError(prefix + "eta0", "must be positive");
  if (!(c.power_t >= 0.0)) throw ConfigError(prefix + "power_t", "must be >= 0");
  if (!(c.decay_steps > 0.0)) throw ConfigError(prefix + "decay_steps", "must be positive");
}

// Fits the posterior mean by SGD on the regularized objective, warm-started
// from `prior` (whose hash_bits and mode are kept), then sets the diagonal
// Laplace variance 1 / (lambda + sum_t w_t p_t (1 - p_t) z_tj^2) at the fitted
// mean. Variances are computed from this batch alone; coordinates absent from
// the batch revert to 1/lambda. Creatives seen in the batch become available.
inline ModelPosterior train_batch(std::span<const TrainingExample> examples, const TrainConfig& cfg,
                                  const ModelPosterior& prior) {
  validate(cfg);
  const int bits = prior.hash_bits();
  const Mode mode = prior.mode();
  const double lambda = cfg.lambda;

  // Compact the active coordinates: prior-stored ones first, then batch ones.
  std::vector<std::uint32_t> global;
  std::unordered_map<std::uint32_t, std::uint32_t> local;
  auto local_of = [&](std::uint32_t g) {
    auto [it, inserted] = local.emplace(g, static_cast<std::uint32_t>(global.size()));
    if (inserted) global.push_back(g);
    return it->second;
  };
  {
    std::vector<std::uint32_t> stored;
    for (const auto& [i, c] : prior.coordinates()) stored.push_back(i);
    std::sort(stored.begin(), stored.end());
    for (auto i : stored) local_of(i);
  }
  const std::size_t n_prior = global.size();
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
  rows.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.z.dimension != base_dimension(bits)) {
      throw DataError("training example dimension does not match hash_bits " + std::to_string(bits));
    }
    auto f = model_features(ex, mode, bits);
    for (auto& [i, v] : f) i = local_of(i);
    rows.push_back(std::move(f));
  }
  std::vector<bool> touched(global.size(), false);
  for (const auto& r : rows)
    for (const auto& [j, v] : r) touched[j] = true;

  std::vector<double> w(global.size(), 0.0);
  for (std::size_t j = 0; j < n_prior; ++j) w[j] = prior.mean(global[j]);

  // Weights are stored as scale * v so that the L2 shrink is O(1) per step.
  double scale = 1.0;
  std::vector<double> v = w;
  const double n = std::max<double>(1.0, static_cast<double>(examples.size()));
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.uniform_index(k)]);
    for (std::size_t idx : order) {
      const auto& ex = examples[idx];
      const auto& r = rows[idx];
      const double eta = cfg.eta0 / std::pow(1.0 + static_cast<double>(t) / cfg.decay_steps, cfg.power_t);
      ++t;
      double sq = 0.0, m = 0.0;
      for (const auto& [j, x] : r) {
        sq += x * x;
        m += x * v[j];
      }
      m *= scale;
      const double g = ex.weight * (sigmoid(m) - (ex.label ? 1.0 : 0.0));
      const double step = eta / std::max(1.0, ex.weight * sq);
      scale *= (1.0 - std::min(0.5, eta * lambda / n));
      for (const auto& [j, x] : r) v[j] -= step * g * x / scale;
      if (scale < 1e-6) {
        for (double& x : v) x *= scale;
        scale = 1.0;
      }
    }
  }
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = scale * v[j];

  std::vector<double> hess(global.size(), lambda);
  for (std::size_t k = 0; k < examples.size(); ++k) {
    double m = 0.0;
    for (const auto& [j, x] : rows[k]) m += x * w[j];
    const double p = sigmoid(m);
    const double c = examples[k].weight * p * (1.0 - p);
    for (const auto& [j, x] : rows[k]) hess[j] += c * x * x;
  }

  ModelPosterior out(bits, mode, lambda);
  for (const auto& id : prior.available()) out.mark_available(id);
  for (const auto& ex : examples) out.mark_available(ex.creative_id);
  for (std::size_t j = 0; j < global.size(); ++j) {
    const double var = touched[j] ? 1.0 / hess[j] : 1.0 / lambda;
    if (w[j] != 0.0 || var != 1.0 / lambda) out.set(global[j], w[j], var);
  }
  return out;
}

inline ModelPosterior train_batch(std::span<const TrainingExample> examples, const TrainConfig& cfg, int hash_bits,
                                  Mode mode) {
  return train_batch(examples, cfg, ModelPosterior(hash_bits, mode, cfg.lambda));
}

// One Thompson draw of the creative-specific block: each listed coordinate is
// drawn from N(mean, alpha * variance). Every other coordinate, including the
// shared theta_0 block and the fatigue coefficients, stays at its mean.
class WeightDraw {
 public:
  explicit WeightDraw(const ModelPosterior& posterior) : posterior_(&posterior) {}

  double operator()(std::uint32_t i) const {
    for (const auto& [j, w] : sampled_)
      if (j == i) return w;
    return posterior_->mean(i);
  }

  void set(std::uint32_t i, double w) {
    for (auto& [j, x] : sampled_) {
      if (j == i) {
        x = w;
        return;
      }
    }
    sampled_.emplace_back(i, w);
  }

  const std::vector<std::pair<std::uint32_t, double>>& sampled() const { return sampled_; }

 private:
  const ModelPosterior* posterior_;
  std::vector<std::pair<std::uint32_t, double>> sampled_;
};

// alpha = 0 is accepted as the greedy limit (draw equals the mean).
template <class R>
WeightDraw sample_weights(const ModelPosterior& posterior, std::span<const std::uint32_t> action_indices,
                          double alpha, R& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must be in [0, 1]");
  WeightDraw draw(posterior);
  for (auto i : action_indices) {
    const double mu = posterior.mean(i);
    const double sd = std::sqrt(alpha * posterior.variance(i));
    draw.set(i, alpha > 0.0 ? mu + sd * rng.normal() : mu);
  }
  return draw;
}

// File format:
//   adfatigue-posterior 1
//   hash_bits <M>
//   mode <baseline|fa>
//   lambda <value>
//   available <n> <creative_id>...
//   coords <k>
//   <index> <mean> <variance>      (k lines, ascending index)
inline void write_posterior(std::ostream& os, const ModelPosterior& p) {
  os << "adfatigue-posterior 1\n";
  os << "hash_bits " << p.hash_bits() << '\n';
  os << "mode " << to_string(p.mode()) << '\n';
  os << "lambda " << text::format_double(p.lambda()) << '\n';
  os << "available " << p.available().size();
  for (const auto& id : p.available()) os << ' ' << id;
  os << '\n';
  std::vector<std::uint32_t> idx;
  for (const auto& [i, c] : p.coordinates()) idx.push_back(i);
  std::sort(idx.begin(), idx.end());
  os << "coords " << idx.size() << '\n';
  for (auto i : idx) {
    const auto& c = p.coordinates().at(i);
    os << i << ' ' << text::format_double(c.mean) << ' ' << text::format_double(c.variance) << '\n';
  }
}

inline ModelPosterior read_posterior(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto fields = [&](std::string_view key, std::size_t min_count) {
    if (!std::getline(is, line)) throw DataError("posterior file truncated before '" + std::string(key) + "'");
    ++lineno;
    auto f = text::split_ws(line);
    if (f.size() < min_count || f[0] != key) {
      throw DataError("posterior file line " + std::to_string(lineno) + ": expected '" + std::string(key) + "'");
    }
    return f;
  };
  auto bad = [&](const std::string& what) {
    return DataError("posterior file line " + std::to_string(lineno) + ": " + what);
  };
  auto head = fields("adfatigue-posterior", 2);
  if (head[1] != "1") throw bad("unsupported version");
  auto bits = text::parse_int<int>(fields("hash_bits", 2)[1]);
  if (!bits) throw bad("bad hash_bits");
  const Mode mode = parse_mode(fields("mode", 2)[1]);
  auto lambda = text::parse_double(fields("lambda", 2)[1]);
  if (!lambda) throw bad("bad lambda");
  ModelPosterior p(*bits, mode, *lambda);
  auto av = fields("available", 2);
  auto n_av = text::parse_int<std::size_t>(av[1]);
  if (!n_av || av.size() != 2 + *n_av) throw bad("availability list length mismatch");
  for (std::size_t k = 0; k < *n_av; ++k) p.mark_available(std::string(av[2 + k]));
  auto n_coords = text::parse_int<std::size_t>(fields("coords", 2)[1]);
  if (!n_coords) throw bad("bad coords count");
  for (std::size_t k = 0; k < *n_coords; ++k) {
    if (!std::getline(is, line)) throw DataError("posterior file truncated in coordinates");
    ++lineno;
    auto f = text::split_ws(line);
    if (f.size() != 3) throw bad("expected '<index> <mean> <variance>'");
    auto i = text::parse_int<std::uint32_t>(f[0]);
    auto mu = text::parse_double(f[1]);
    auto var = text::parse_double(f[2]);
    if (!i || !mu || !var) throw bad("malformed coordinate");
    p.set(*i, *mu, *var);
  }
  return p;
}

}  // namespace adfatigue
