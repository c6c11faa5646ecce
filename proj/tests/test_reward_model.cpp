#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "adfatigue/features.hpp"
#include "adfatigue/reward_model.hpp"
#include "adfatigue/rng.hpp"

using namespace adfatigue;

namespace {

constexpr int kBits = 4;

TrainingExample example(std::vector<std::pair<std::uint32_t, double>> z, double kappa, bool label, double w = 1.0,
                        std::string creative = "c") {
  TrainingExample ex;
  ex.z.dimension = base_dimension(kBits);
  ex.z.entries = std::move(z);
  std::sort(ex.z.entries.begin(), ex.z.entries.end());
  ex.kappa = kappa;
  ex.label = label;
  ex.weight = w;
  ex.creative_id = std::move(creative);
  return ex;
}

std::vector<TrainingExample> random_instance(Rng& rng, std::size_t n) {
  std::vector<TrainingExample> out;
  for (std::size_t t = 0; t < n; ++t) {
    std::map<std::uint32_t, double> z;
    for (int k = 0; k < 3; ++k) z[static_cast<std::uint32_t>(rng.uniform_index(base_dimension(kBits)))] += rng.normal();
    out.push_back(example({z.begin(), z.end()}, 3.0 * rng.uniform(), rng.bernoulli(0.4), 0.5 + rng.uniform()));
  }
  return out;
}

// Independent evaluation of sum_t w_t log(1 + exp(-y_t m_t)) + lambda/2 |theta|^2
// with y in {-1, +1}, features written out densely.
double independent_nll(const std::vector<TrainingExample>& xs, const std::vector<double>& theta, double lambda,
                       Mode mode) {
  double s = 0.0;
  for (const auto& ex : xs) {
    std::vector<double> dense(theta.size(), 0.0);
    for (const auto& [i, v] : ex.z.entries) dense[i] += v;
    if (mode == Mode::kFatigueAware) {
      dense[base_dimension(kBits)] += ex.kappa;
      dense[base_dimension(kBits) + 1] += ex.kappa * ex.kappa;
    }
    double m = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) m += dense[i] * theta[i];
    const double y = ex.label ? 1.0 : -1.0;
    s += ex.weight * std::log1p(std::exp(-y * m));
  }
  double sq = 0.0;
  for (double w : theta) sq += w * w;
  return s + 0.5 * lambda * sq;
}

std::vector<double> dense_mean(const ModelPosterior& p) {
  std::vector<double> th(p.dimension(), 0.0);
  for (std::size_t i = 0; i < th.size(); ++i) th[i] = p.mean(static_cast<std::uint32_t>(i));
  return th;
}

}  // namespace

TEST(RewardModel, SigmoidAndSoftplusAreStable) {
  EXPECT_NEAR(sigmoid(1.7), 1.0 / (1.0 + std::exp(-1.7)), 1e-16);
  EXPECT_EQ(sigmoid(-800), 0.0);
  EXPECT_EQ(sigmoid(800), 1.0);
  EXPECT_NEAR(softplus(800), 800.0, 1e-12);
  EXPECT_NEAR(softplus(-3), std::log1p(std::exp(-3.0)), 1e-16);
}

TEST(RewardModel, PredictIncludesFatigueTerms) {
  ModelPosterior p(kBits, Mode::kFatigueAware, 1.0);
  p.set(2, 1.0, 1.0);
  p.set(5, 0.5, 1.0);
  p.set(kappa_index(kBits), 0.3, 1.0);
  p.set(kappa_sq_index(kBits), -0.1, 1.0);
  const auto ex = example({{2, 1.0}, {5, 1.0}}, 1.0, false);
  const auto theta = [&](std::uint32_t i) { return p.mean(i); };
  EXPECT_NEAR(linear_score(ex.z, theta, 1.0, Mode::kFatigueAware, kBits), 1.7, 1e-15);
  EXPECT_NEAR(predict(ex.z, theta, 1.0, Mode::kFatigueAware, kBits), 0.8455347349164652, 1e-15);
  EXPECT_NEAR(predict(ex.z, theta, 1.0, Mode::kBaseline, kBits), 1.0 / (1.0 + std::exp(-1.5)), 1e-15);
}

TEST(RewardModel, ObjectiveMatchesIndependentEvaluation) {
  Rng rng(1);
  for (Mode mode : {Mode::kBaseline, Mode::kFatigueAware}) {
    const auto xs = random_instance(rng, 20);
    std::vector<double> theta(model_dimension(kBits, mode));
    for (auto& w : theta) w = rng.normal();
    EXPECT_NEAR(regularized_nll(xs, theta, 0.3, mode, kBits), independent_nll(xs, theta, 0.3, mode), 1e-10);
  }
}

TEST(RewardModel, GradientMatchesFiniteDifferences) {
  Rng rng(99);
  for (int inst = 0; inst < 100; ++inst) {
    const Mode mode = inst % 2 ? Mode::kFatigueAware : Mode::kBaseline;
    const auto xs = random_instance(rng, 1 + rng.uniform_index(12));
    const double lambda = 0.01 + rng.uniform();
    std::vector<double> theta(model_dimension(kBits, mode));
    for (auto& w : theta) w = 0.3 * rng.normal();
    const auto g = regularized_nll_gradient(xs, theta, lambda, mode, kBits);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double h = 1e-5;
      auto up = theta, dn = theta;
      up[i] += h;
      dn[i] -= h;
      const double fd = (regularized_nll(xs, up, lambda, mode, kBits) - regularized_nll(xs, dn, lambda, mode, kBits)) /
                        (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::fabs(fd))) << "instance " << inst << " coord " << i;
    }
  }
}

TEST(RewardModel, UntouchedCoordinatesKeepPriorVariance) {
  const double lambda = 0.0011;
  std::vector<TrainingExample> xs = {example({{1, 1.0}}, 0.0, true), example({{1, 1.0}, {3, 1.0}}, 0.0, false)};
  TrainConfig cfg;
  cfg.lambda = lambda;
  const auto p = train_batch(xs, cfg, kBits, Mode::kFatigueAware);
  for (std::uint32_t i : {0u, 2u, 4u, 15u, kappa_index(kBits), kappa_sq_index(kBits)}) {
    EXPECT_EQ(p.variance(i), 1.0 / lambda) << i;
    EXPECT_EQ(p.mean(i), 0.0) << i;
  }
  EXPECT_LT(p.variance(1), 1.0 / lambda);
}

TEST(RewardModel, LaplaceVarianceAtTheFittedMean) {
  Rng rng(4);
  const auto xs = random_instance(rng, 40);
  TrainConfig cfg;
  cfg.lambda = 0.5;
  cfg.epochs = 3;
  const auto p = train_batch(xs, cfg, kBits, Mode::kFatigueAware);
  const auto theta = dense_mean(p);
  std::vector<double> h(theta.size(), cfg.lambda);
  std::vector<bool> touched(theta.size(), false);
  for (const auto& ex : xs) {
    std::vector<double> dense(theta.size(), 0.0);
    for (const auto& [i, v] : ex.z.entries) dense[i] += v;
    dense[base_dimension(kBits)] += ex.kappa;
    dense[base_dimension(kBits) + 1] += ex.kappa * ex.kappa;
    double m = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) m += dense[i] * theta[i];
    const double q = 1.0 / (1.0 + std::exp(-m));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      h[i] += ex.weight * q * (1 - q) * dense[i] * dense[i];
      touched[i] = touched[i] || dense[i] != 0.0;
    }
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double expect = touched[i] ? 1.0 / h[i] : 1.0 / cfg.lambda;
    EXPECT_NEAR(p.variance(static_cast<std::uint32_t>(i)), expect, 1e-9 * expect) << i;
  }
}

TEST(RewardModel, TrainingBeatsZeroWeightsOnSeparableToys) {
  Rng rng(8);
  for (int toy = 0; toy < 10; ++toy) {
    // Label determined by which of two feature groups is present.
    std::vector<TrainingExample> xs;
    for (int t = 0; t < 200; ++t) {
      const bool y = rng.bernoulli(0.5);
      const std::uint32_t base = y ? 0 : 8;
      xs.push_back(example({{base + static_cast<std::uint32_t>(rng.uniform_index(8)), 1.0}}, 0.0, y));
    }
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(toy);
    const auto p = train_batch(xs, cfg, kBits, Mode::kBaseline);
    const std::vector<double> zero(p.dimension(), 0.0);
    const double trained = independent_nll(xs, dense_mean(p), cfg.lambda, Mode::kBaseline);
    const double at_zero = independent_nll(xs, zero, cfg.lambda, Mode::kBaseline);
    EXPECT_LT(trained, at_zero);
    EXPECT_LT(trained, 0.5 * at_zero);
    for (const auto& ex : xs) {
      const double m = p.mean(ex.z.entries[0].first);
      EXPECT_EQ(m > 0, ex.label);
    }
  }
}

TEST(RewardModel, RecoversFatigueCurvature) {
  // Clicks follow a concave quadratic in kappa; the fitted b2 must be negative.
  Rng rng(12);
  std::vector<TrainingExample> xs;
  for (int t = 0; t < 20000; ++t) {
    const double k = 10.0 * rng.uniform();
    const double p = 1.0 / (1.0 + std::exp(-(-1.0 + 0.8 * k - 0.1 * k * k)));
    xs.push_back(example({{0, 1.0}}, k, rng.bernoulli(p)));
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto p = train_batch(xs, cfg, kBits, Mode::kFatigueAware);
  EXPECT_GT(p.b1(), 0.0);
  EXPECT_LT(p.b2(), 0.0);
  EXPECT_NEAR(p.b1() / (-2 * p.b2()), 4.0, 1.0);
}

TEST(RewardModel, TrainingIsDeterministicAndWarmStarts) {
  Rng rng(21);
  const auto xs = random_instance(rng, 50);
  TrainConfig cfg;
  cfg.seed = 5;
  const auto a = train_batch(xs, cfg, kBits, Mode::kFatigueAware);
  const auto b = train_batch(xs, cfg, kBits, Mode::kFatigueAware);
  EXPECT_EQ(a, b);
  const auto warm = train_batch({}, cfg, a);
  EXPECT_EQ(dense_mean(warm), dense_mean(a));
  EXPECT_EQ(warm.available(), a.available());
  EXPECT_TRUE(a.is_available("c"));
}

TEST(RewardModel, DownsampleKeepsPositivesAndThinsNegatives) {
  std::vector<TrainingExample> xs;
  const int neg = 100000, pos = 1000;
  for (int i = 0; i < neg; ++i) xs.push_back(example({{0, 1.0}}, 0, false));
  for (int i = 0; i < pos; ++i) xs.push_back(example({{0, 1.0}}, 0, true));
  const double rate = 0.05;
  const auto kept = downsample(xs, rate, 3);
  int kp = 0, kn = 0;
  for (const auto& ex : kept) (ex.label ? kp : kn)++;
  EXPECT_EQ(kp, pos);
  EXPECT_NEAR(kn, neg * rate, 3 * std::sqrt(neg * rate * (1 - rate)));
  EXPECT_EQ(downsample(xs, rate, 3).size(), kept.size());
  EXPECT_EQ(downsample(xs, 1.0, 3).size(), xs.size());
  EXPECT_THROW(downsample(xs, 0.0, 3), ConfigError);
}

TEST(RewardModel, PosteriorFileRoundTrip) {
  ModelPosterior p(24, Mode::kFatigueAware, 0.0011);
  p.set(7, 0.1, 0.25);
  p.set(kappa_index(24), 0.4, 1.0 / 3.0);
  p.mark_available("A-01");
  p.mark_available("A-02");
  std::stringstream ss;
  write_posterior(ss, p);
  const std::string text = ss.str();
  const auto back = read_posterior(ss);
  EXPECT_EQ(back, p);
  std::stringstream again;
  write_posterior(again, back);
  EXPECT_EQ(again.str(), text);
  std::istringstream bad("adfatigue-posterior 1\nhash_bits 24\nmode fa\nlambda 1\navailable 2 x\n");
  EXPECT_THROW(read_posterior(bad), DataError);
}

TEST(RewardModel, PosteriorValidation) {
  EXPECT_THROW(ModelPosterior(0, Mode::kBaseline, 1.0), ConfigError);
  EXPECT_THROW(ModelPosterior(8, Mode::kBaseline, 0.0), ConfigError);
  ModelPosterior p(4, Mode::kBaseline, 1.0);
  EXPECT_THROW(p.set(16, 0.0, 1.0), DataError);
  EXPECT_THROW(p.set(1, 0.0, 0.0), DataError);
  EXPECT_EQ(p.b1(), 0.0);
  EXPECT_THROW(parse_mode("other"), ConfigError);
}
