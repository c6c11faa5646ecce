#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "adfatigue/config.hpp"

using namespace adfatigue;
using nlohmann::json;

namespace {

std::string config_error_field(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Config, Defaults) {
  const auto c = parse_run_config(json::object());
  const auto& x = c.experiment;
  EXPECT_EQ(x.policy.alpha, 0.01);
  EXPECT_EQ(x.policy.train.lambda, 0.0011);
  EXPECT_EQ(x.policy.negative_rate, 0.05);
  EXPECT_EQ(x.policy.hash_bits, 24);
  EXPECT_EQ(x.history_window, 86400);
  EXPECT_EQ(x.kappa_bin_width, 5.0);
  EXPECT_EQ(x.days, 7);
  EXPECT_EQ(c.replay.alphas, std::vector<double>{0.01});
  EXPECT_EQ(c.replay.lambdas, std::vector<double>{0.0011});
  EXPECT_EQ(x.env.campaigns.size(), 3u);
}

TEST(Config, OverridesApply) {
  const auto c = parse_run_config(json::parse(R"({
    "seed": 9, "days": 3, "out_dir": "elsewhere",
    "policy": {"alpha": 0.5, "lambda": 0.01},
    "env": {"n_users": 50, "campaigns": [{"id": "Z", "n_creatives": 4}]},
    "replay": {"modes": ["logged"]}
  })"));
  EXPECT_EQ(c.experiment.seed, 9u);
  EXPECT_EQ(c.experiment.days, 3);
  EXPECT_EQ(c.out_dir, "elsewhere");
  EXPECT_EQ(c.experiment.policy.alpha, 0.5);
  EXPECT_EQ(c.experiment.policy.train.lambda, 0.01);
  EXPECT_EQ(c.experiment.env.n_users, 50);
  ASSERT_EQ(c.experiment.env.campaigns.size(), 1u);
  EXPECT_EQ(c.experiment.env.campaigns[0].id, "Z");
  EXPECT_EQ(c.experiment.env.campaigns[0].n_creatives, 4);
  EXPECT_EQ(c.replay.modes, std::vector<std::string>{"logged"});
}

TEST(Config, UnknownKeysAreNamed) {
  EXPECT_EQ(config_error_field(json::parse(R"({"dayz": 3})")), "dayz");
  EXPECT_EQ(config_error_field(json::parse(R"({"policy": {"alpah": 0.1}})")), "policy.alpah");
  EXPECT_EQ(config_error_field(json::parse(R"({"env": {"campaigns": [{"id": "Z", "size": 1}]}})")),
            "env.campaigns[0].size");
}

TEST(Config, InvalidValuesAreNamed) {
  EXPECT_EQ(config_error_field(json::parse(R"({"days": 0})")), "days");
  EXPECT_EQ(config_error_field(json::parse(R"({"policy": {"alpha": 0}})")), "policy.alpha");
  EXPECT_EQ(config_error_field(json::parse(R"({"policy": {"lambda": -1}})")), "policy.lambda");
  EXPECT_EQ(config_error_field(json::parse(R"({"history_window_seconds": 0})")), "history_window_seconds");
  EXPECT_EQ(config_error_field(json::parse(R"({"replay": {"train_fraction": 1.0}})")), "replay.train_fraction");
  EXPECT_EQ(config_error_field(json::parse(R"({"replay": {"modes": ["greedy"]}})")), "replay.modes");
  EXPECT_EQ(config_error_field(json::parse(R"({"env": {"wear_out": -0.1}})")), "env.wear_out");
}

TEST(Config, WrongTypeIsNamed) {
  EXPECT_EQ(config_error_field(json::parse(R"({"days": "seven"})")), "days");
  EXPECT_EQ(config_error_field(json::parse(R"({"policy": []})")), "policy");
}

TEST(Config, JsonRoundTrip) {
  auto c = parse_run_config(json::parse(R"({"seed": 4, "policy": {"alpha": 0.2}, "replay": {"alphas": [0.1, 0.3]}})"));
  const auto dumped = to_json(c).dump();
  const auto back = parse_run_config(json::parse(dumped));
  EXPECT_EQ(to_json(back).dump(), dumped);
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / "adfatigue_test_config";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "ok.json") << R"({"days": 2})";
    std::ofstream(dir / "bad.json") << R"({"days": )";
  }
  EXPECT_EQ(load_run_config(dir / "ok.json").experiment.days, 2);
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}
