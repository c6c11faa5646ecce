#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#ifdef ADFATIGUE_CLI

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("adfatigue_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("small.json",
          R"({"days": 1, "pre_days": 1, "policy": {"hash_bits": 16},)"
          R"( "env": {"n_users": 60, "mean_daily_impressions": 8}})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& body) const { std::ofstream(path(name)) << body; }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  // Runs the CLI with `args`, stdout to `out` (inside the temp dir); returns
  // the exit status.
  int run(const std::string& args, const std::string& out = "stdout.txt", const std::string& env = "") const {
    const std::string cmd = env + " '" + std::string(ADFATIGUE_CLI) + "' " + args + " > '" + path(out).string() +
                            "' 2> '" + path("stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string q(const std::string& name) const { return "'" + path(name).string() + "'"; }

  fs::path dir_;
};

constexpr const char* kTwoCreatives =
    R"({"creative_id":"x1","campaign_id":"K","active_from":0,"active_until":100,"text":"a b","embedding":[1,0]})"
    "\n"
    R"({"creative_id":"x2","campaign_id":"K","active_from":0,"active_until":100,"text":"a c","embedding":[1,1]})"
    "\n";

}  // namespace

TEST_F(Cli, SimilarityOnTinyCatalog) {
  write("cat.jsonl", kTwoCreatives);
  ASSERT_EQ(run("similarity --catalog " + q("cat.jsonl") + " --out " + q("sim.txt")), 0) << read(path("stderr.txt"));
  const auto first = read(path("sim.txt"));
  EXPECT_NE(first.find("x1"), std::string::npos);
  EXPECT_NE(first.find("x2"), std::string::npos);
  ASSERT_EQ(run("similarity --catalog " + q("cat.jsonl") + " --out " + q("sim2.txt")), 0);
  EXPECT_EQ(read(path("sim2.txt")), first);
}

TEST_F(Cli, ExitCodes) {
  write("dup.jsonl", std::string(kTwoCreatives) +
                         R"({"creative_id":"x1","campaign_id":"K","active_from":0,"active_until":100})" + "\n");
  EXPECT_EQ(run("similarity --catalog " + q("dup.jsonl") + " --out " + q("s.txt")), 4);
  write("zero.json", R"({"days": 0})");
  EXPECT_EQ(run("simulate --config " + q("zero.json")), 2);
  EXPECT_NE(read(path("stderr.txt")).find("days"), std::string::npos);
  EXPECT_EQ(run("simulate --config " + q("nope.json")), 3);
  EXPECT_EQ(run("simulate --bogus-flag"), 1);
  EXPECT_EQ(run("--help"), 0);
  write("empty.jsonl", "");
  EXPECT_NE(run("replay --log " + q("empty.jsonl")), 0);
}

TEST_F(Cli, SimulateSelectReplay) {
  ASSERT_EQ(run("simulate --config " + q("small.json") + " --out-dir " + q("run1")), 0) << read(path("stderr.txt"));
  for (const char* f : {"config.json", "impressions.jsonl", "pre_impressions.jsonl", "catalog.jsonl", "similarity.txt",
                        "posterior_fa.txt", "posterior_baseline.txt", "history.tsv", "metrics.json", "metrics.txt",
                        "kappa_histogram.tsv", "frequency.tsv", "true_fatigue.tsv"})
    EXPECT_TRUE(fs::exists(path("run1") / f)) << f;

  ASSERT_EQ(run("simulate --config " + q("small.json") + " --out-dir " + q("run2")), 0);
  for (const char* f : {"impressions.jsonl", "metrics.json", "posterior_fa.txt", "kappa_histogram.tsv"})
    EXPECT_EQ(read(path("run1") / f), read(path("run2") / f)) << f;

  // A request for the first catalog creative's campaign.
  std::ifstream cat(path("run1") / "catalog.jsonl");
  std::string line;
  std::getline(cat, line);
  const auto c0 = nlohmann::json::parse(line);
  const std::string camp = c0.at("campaign_id"), id = c0.at("creative_id");
  const std::string common = "select --posterior " + q("run1/posterior_fa.txt") + " --similarity " +
                             q("run1/similarity.txt") + " --history " + q("run1/history.tsv");
  write("req.json", R"({"user_id":"u1","campaign_id":")" + camp + R"(","t":1000,"context":["bias"],"candidates":[")" +
                        id + R"("]})");
  ASSERT_EQ(run(common + " --request " + q("req.json"), "d1.json"), 0) << read(path("stderr.txt"));
  const auto d = nlohmann::json::parse(read(path("d1.json")));
  EXPECT_EQ(d.at("chosen"), id);
  ASSERT_EQ(run(common + " --request " + q("req.json") + " --latency-budget-ms 1000", "d2.json"), 0);
  EXPECT_EQ(read(path("d1.json")), read(path("d2.json")));
  EXPECT_NE(read(path("stderr.txt")).find("within_budget"), std::string::npos);

  write("bad.json", R"({"user_id":"u1")");
  EXPECT_EQ(run(common + " --request " + q("bad.json")), 4);
  write("unknown.json", R"({"user_id":"u1","campaign_id":")" + camp +
                            R"(","t":1000,"candidates":["no-such-creative"]})");
  EXPECT_EQ(run(common + " --request " + q("unknown.json")), 4);

  write("grid.json", R"({"replay": {"modes": ["fa"], "alphas": [0.01], "lambdas": [0.0011]}})");
  ASSERT_EQ(run("replay --config " + q("grid.json") + " --log " + q("run1/impressions.jsonl"), "grid.tsv"), 0)
      << read(path("stderr.txt"));
  std::istringstream rows(read(path("grid.tsv")));
  int n = 0;
  while (std::getline(rows, line))
    if (!line.empty()) ++n;
  EXPECT_EQ(n, 2);  // header plus one grid point

  ASSERT_EQ(run("report --log " + q("run1/impressions.jsonl") + " --out-dir " + q("rep")), 0);
  EXPECT_EQ(read(path("rep") / "metrics.json"), read(path("run1") / "metrics.json"));
}

TEST_F(Cli, OutputDirectoryPrecedence) {
  write("cfg.json", R"({"days": 1, "pre_days": 0, "env": {"n_users": 30, "mean_daily_impressions": 4},)"
                    R"( "policy": {"hash_bits": 12}, "out_dir": ")" + path("from_config").string() + R"("})");
  ASSERT_EQ(run("simulate --config " + q("cfg.json")), 0) << read(path("stderr.txt"));
  EXPECT_TRUE(fs::exists(path("from_config") / "metrics.json"));
  const std::string env = "ADFATIGUE_OUT_DIR=" + q("from_env");
  ASSERT_EQ(run("simulate --config " + q("cfg.json"), "stdout.txt", env), 0);
  EXPECT_TRUE(fs::exists(path("from_env") / "metrics.json"));
  ASSERT_EQ(run("simulate --config " + q("cfg.json") + " --out-dir " + q("from_flag"), "stdout.txt", env), 0);
  EXPECT_TRUE(fs::exists(path("from_flag") / "metrics.json"));
}

#endif
