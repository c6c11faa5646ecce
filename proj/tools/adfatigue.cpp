#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "adfatigue/catalog.hpp"
#include "adfatigue/config.hpp"
#include "adfatigue/errors.hpp"
#include "adfatigue/experiment.hpp"
#include "adfatigue/fatigue_report.hpp"
#include "adfatigue/history.hpp"
#include "adfatigue/impression_log.hpp"
#include "adfatigue/metrics.hpp"
#include "adfatigue/policy.hpp"
#include "adfatigue/reward_model.hpp"
#include "adfatigue/similarity.hpp"
#include "adfatigue/text.hpp"
#include "adfatigue/tuning.hpp"

namespace fs = std::filesystem;
using namespace adfatigue;

namespace {

constexpr const char* kOutDirEnv = "ADFATIGUE_OUT_DIR";

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

// Flags override the environment, which overrides the config file.
RunConfig resolve_config(const CommonOptions& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (const char* env = std::getenv(kOutDirEnv); env && *env) rc.out_dir = env;
  if (o.out_dir) rc.out_dir = *o.out_dir;
  if (o.seed) {
    rc.experiment.seed = *o.seed;
    rc.replay.seed = *o.seed;
  }
  validate(rc);
  return rc;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  fn(os);
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

std::ifstream open_input(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
  return in;
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_reports(const fs::path& dir, std::span<const ImpressionRecord> log, const ExperimentConfig& x) {
  const auto metrics = compute_metrics(log);
  const auto fr = fatigue_report(log, x.kappa_bin_width, x.true_fatigue_bin_width);
  write_file(dir / "metrics.json", [&](std::ostream& os) { os << metrics_json(metrics).dump(2) << '\n'; });
  write_file(dir / "metrics.txt", [&](std::ostream& os) { write_metrics_table(os, metrics); });
  write_file(dir / "kappa_histogram.tsv", [&](std::ostream& os) { write_kappa_histogram(os, fr); });
  write_file(dir / "frequency.tsv", [&](std::ostream& os) { write_frequency_table(os, fr); });
  write_file(dir / "true_fatigue.tsv", [&](std::ostream& os) { write_true_fatigue_table(os, fr); });
  write_metrics_table(std::cout, metrics);
}

int cmd_similarity(const CommonOptions& common, const std::string& catalog_path, std::string out_path) {
  const RunConfig rc = resolve_config(common);
  const auto catalog = read_catalog_file(catalog_path);
  const auto index = build_similarity_index(catalog);
  if (out_path.empty()) {
    ensure_dir(rc.out_dir);
    out_path = (fs::path(rc.out_dir) / "similarity.txt").string();
  }
  write_file(out_path, [&](std::ostream& os) { write_similarity(os, index); });
  std::cout << "campaign\tcreatives\tmean\tsd\n";
  for (const auto& [id, m] : index) {
    const auto st = m.off_diagonal_stats();
    std::cout << id << '\t' << m.size() << '\t' << (st ? fixed(st->mean) : "-") << '\t'
              << (st && st->pairs > 1 ? fixed(st->sd) : "-") << '\n';
  }
  return 0;
}

int cmd_simulate(const CommonOptions& common) {
  const RunConfig rc = resolve_config(common);
  const auto& x = rc.experiment;
  const auto res = run_experiment(x);
  const fs::path dir = rc.out_dir;
  ensure_dir(dir);

  write_file(dir / "config.json", [&](std::ostream& os) { os << to_json(rc).dump(2) << '\n'; });
  write_file(dir / "impressions.jsonl", [&](std::ostream& os) { write_log(os, res.log); });
  write_file(dir / "pre_impressions.jsonl", [&](std::ostream& os) { write_log(os, res.pre_log); });
  write_file(dir / "catalog.jsonl", [&](std::ostream& os) { write_catalog(os, res.catalog); });
  write_file(dir / "similarity.txt", [&](std::ostream& os) { write_similarity(os, res.similarity); });
  write_file(dir / "posterior_fa.txt",
             [&](std::ostream& os) { write_posterior(os, res.posteriors.at(Arm::kFatigueAware)); });
  write_file(dir / "posterior_baseline.txt",
             [&](std::ostream& os) { write_posterior(os, res.posteriors.at(Arm::kBaseline)); });

  // Exposure history as the serving path would hold it at the end of the run.
  HistoryStore history(x.history_window);
  for (const auto& r : res.log) history.record_exposure(r.user_id, r.campaign_id, r.chosen(), r.t);
  const Timestamp end = static_cast<Timestamp>(x.pre_days + x.days) * kSecondsPerDay;
  history.purge_expired(end);
  write_file(dir / "history.tsv", [&](std::ostream& os) { history.dump(os); });

  write_reports(dir, res.log, x);
  return 0;
}

int cmd_report(const CommonOptions& common, const std::string& log_path) {
  const RunConfig rc = resolve_config(common);
  auto in = open_input(log_path, "impression log");
  const auto log = read_log(in);
  if (log.empty()) throw DataError("impression log has no records");
  ensure_dir(rc.out_dir);
  write_reports(rc.out_dir, log, rc.experiment);
  return 0;
}

int cmd_replay(const CommonOptions& common, const std::string& log_path) {
  const RunConfig rc = resolve_config(common);
  auto in = open_input(log_path, "impression log");
  const auto log = read_log(in);
  if (log.empty()) throw DataError("impression log has no records");
  const auto rows = replay_grid(log, rc.replay, rc.experiment.policy);
  std::cout << "mode\talpha\tlambda\trecords\tconsumed\tclicks\tctr\n";
  for (const auto& r : rows) {
    std::cout << r.mode << '\t' << (r.alpha ? text::format_double(*r.alpha) : "-") << '\t'
              << (r.lambda ? text::format_double(*r.lambda) : "-") << '\t' << r.estimate.records << '\t'
              << r.estimate.consumed << '\t' << r.estimate.clicks << '\t' << text::format_double(r.estimate.ctr)
              << '\n';
  }
  return 0;
}

struct SelectRequest {
  std::string user_id;
  std::string campaign_id;
  Timestamp t = 0;
  std::vector<std::string> context;
  std::vector<std::string> candidates;
};

SelectRequest parse_request(std::istream& in) {
  SelectRequest q;
  try {
    const auto j = nlohmann::json::parse(in);
    q.user_id = j.at("user_id").get<std::string>();
    q.campaign_id = j.at("campaign_id").get<std::string>();
    q.t = j.at("t").get<Timestamp>();
    if (j.contains("context")) q.context = j.at("context").get<std::vector<std::string>>();
    q.candidates = j.at("candidates").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed request: ") + e.what());
  }
  if (q.candidates.empty()) throw DataError("malformed request: empty candidate list");
  return q;
}

nlohmann::ordered_json score_json(double s) {
  if (s == kExploreHigh) return "+inf";
  if (s == kExploreLow) return "-inf";
  return s;
}

struct SelectOptions {
  std::string posterior;
  std::string similarity;
  std::string history;
  std::string request;
  std::optional<double> alpha;
  std::optional<double> latency_budget_ms;
};

int cmd_select(const CommonOptions& common, const SelectOptions& so) {
  const RunConfig rc = resolve_config(common);
  const double alpha = so.alpha.value_or(rc.experiment.policy.alpha);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must be in [0, 1]");

  auto pin = open_input(so.posterior, "posterior");
  const auto posterior = read_posterior(pin);
  auto sin = open_input(so.similarity, "similarity file");
  const auto index = read_similarity(sin);
  HistoryStore history(rc.experiment.history_window);
  if (!so.history.empty()) {
    auto hin = open_input(so.history, "history snapshot");
    history.load(hin);
  }
  SelectRequest q;
  if (so.request == "-") {
    q = parse_request(std::cin);
  } else {
    auto qin = open_input(so.request, "request");
    q = parse_request(qin);
  }

  const auto it = index.find(q.campaign_id);
  if (it == index.end()) throw DataError("unknown campaign " + q.campaign_id);
  const SimilarityMatrix& sim = it->second;
  for (const auto& c : q.candidates)
    if (!sim.index_of(c)) throw DataError("unknown creative " + c + " in campaign " + q.campaign_id);

  const ContextVector x(q.context);
  Rng rng(rc.experiment.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = select(x, q.candidates, q.user_id, q.t, posterior.mode(), posterior, &sim, &history, alpha, rng);
  const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::ordered_json out;
  out["user_id"] = q.user_id;
  out["campaign_id"] = q.campaign_id;
  out["t"] = q.t;
  out["mode"] = std::string(to_string(posterior.mode()));
  out["seed"] = rc.experiment.seed;
  out["chosen"] = d.chosen;
  out["chosen_index"] = d.chosen_index;
  auto cands = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < q.candidates.size(); ++k) {
    nlohmann::ordered_json c;
    c["creative_id"] = q.candidates[k];
    c["kappa"] = d.kappas.at(k);
    c["score"] = score_json(d.scores[k]);
    c["available"] = static_cast<bool>(d.available[k]);
    cands.push_back(c);
  }
  out["candidates"] = cands;
  std::cout << out.dump() << '\n';

  // Timing goes to stderr so the decision record stays reproducible.
  if (so.latency_budget_ms) {
    const bool ok = wall_ms <= *so.latency_budget_ms;
    std::cerr << "wall_time_ms=" << fixed(wall_ms, 3) << " budget_ms=" << text::format_double(*so.latency_budget_ms)
              << " within_budget=" << (ok ? "yes" : "no") << '\n';
  }
  return 0;
}

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--seed", o.seed, "Override the configured seed");
  sub->add_option("--out-dir", o.out_dir, std::string("Output directory (also ") + kOutDirEnv + ")");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fatigue-aware ad-creative selection: similarity, simulation, selection, replay and reports"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string catalog_path, sim_out, log_path;
  SelectOptions so;

  auto* similarity = app.add_subcommand("similarity", "Build per-campaign similarity matrices from a catalog");
  add_common(similarity, common);
  similarity->add_option("--catalog", catalog_path, "Catalog (JSON lines)")->required();
  similarity->add_option("--out", sim_out, "Output file (default <out-dir>/similarity.txt)");

  auto* simulate = app.add_subcommand("simulate", "Run the three-arm experiment in the simulator");
  add_common(simulate, common);

  auto* select_cmd = app.add_subcommand("select", "Choose a creative for one request");
  add_common(select_cmd, common);
  select_cmd->add_option("--posterior", so.posterior, "Posterior file")->required();
  select_cmd->add_option("--similarity", so.similarity, "Similarity file")->required();
  select_cmd->add_option("--history", so.history, "History snapshot (TSV)");
  select_cmd->add_option("--request", so.request, "Request record (JSON, or - for stdin)")->required();
  select_cmd->add_option("--alpha", so.alpha, "Posterior variance scale");
  select_cmd->add_option("--latency-budget-ms", so.latency_budget_ms, "Report wall time against this budget");

  auto* replay = app.add_subcommand("replay", "Replay-tune a parameter grid on the Random arm of a log");
  add_common(replay, common);
  replay->add_option("--log", log_path, "Impression log")->required();

  auto* report = app.add_subcommand("report", "Recompute metrics and fatigue reports from a log");
  add_common(report, common);
  report->add_option("--log", log_path, "Impression log")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*similarity) return cmd_similarity(common, catalog_path, sim_out);
    if (*simulate) return cmd_simulate(common);
    if (*select_cmd) return cmd_select(common, so);
    if (*replay) return cmd_replay(common, log_path);
    if (*report) return cmd_report(common, log_path);
  } catch (const Error& e) {
    std::cerr << "adfatigue: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "adfatigue: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}
