#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedbcd/experiment.hpp"

using namespace fedbcd;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.servers = 2;
  c.devices_per_server = 3;
  c.classes = 4;
  c.diversity = 2;
  c.samples_per_device = 24;
  c.test_samples_per_device = 8;
  c.rounds = 5;
  c.activation_count = 2;
  c.offline_count = 3;
  c.seeds = {11};
  return c;
}

}  // namespace

TEST_CASE("zero rounds yields only the initial metrics row") {
  RunConfig c = tiny_config();
  c.rounds = 0;
  SeedRunResult r = run_single_seed(c, 11);
  REQUIRE(r.records.size() == 1);
  REQUIRE(r.records[0].round == 0);
  REQUIRE(r.records[0].sim_time == 0.0);
  std::istringstream csv(r.metrics_csv);
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  REQUIRE(lines == 2);  // header + one row
}

TEST_CASE("metrics CSV begins with the fixed header") {
  SeedRunResult r = run_single_seed(tiny_config(), 11);
  std::istringstream csv(r.metrics_csv);
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == metrics_csv_header());
  REQUIRE(r.records.size() == 6);  // initial + 5 rounds
  REQUIRE(r.records.back().round == 5);
}

TEST_CASE("the same seed reproduces the run byte for byte") {
  RunConfig c = tiny_config();
  SeedRunResult a = run_single_seed(c, 11);
  SeedRunResult b = run_single_seed(c, 11);
  REQUIRE(a.metrics_csv == b.metrics_csv);
  REQUIRE(a.event_lines == b.event_lines);

  SeedRunResult other = run_single_seed(c, 12);
  REQUIRE(a.metrics_csv != other.metrics_csv);
}

TEST_CASE("run_experiment writes the per-seed outputs and a summary") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "fedbcd_exp_test";
  fs::remove_all(dir);

  RunConfig c = tiny_config();
  c.rounds = 3;
  c.seeds = {5, 6};
  auto results = run_experiment(c, dir.string());
  REQUIRE(results.size() == 2);

  for (std::uint64_t seed : {5, 6}) {
    fs::path mpath = dir / ("metrics_" + std::to_string(seed) + ".csv");
    REQUIRE(fs::exists(mpath));
    std::ifstream in(mpath);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == metrics_csv_header());

    fs::path epath = dir / ("events_" + std::to_string(seed) + ".ndjson");
    REQUIRE(fs::exists(epath));
    std::ifstream ein(epath);
    std::string line;
    int events = 0;
    while (std::getline(ein, line)) {
      nlohmann::json j = nlohmann::json::parse(line);
      REQUIRE(j.contains("round"));
      REQUIRE(j.contains("kind"));
      REQUIRE(j.contains("actor"));
      REQUIRE(j["sim_time"].get<double>() >= 0.0);
      ++events;
    }
    REQUIRE(events > 0);
  }

  std::ifstream sin(dir / "summary.json");
  nlohmann::json summary = nlohmann::json::parse(sin);
  REQUIRE(summary["runs"].size() == 2);
  REQUIRE(summary["seeds"].size() == 2);
  REQUIRE(summary.contains("config"));
  // the echoed config parses back
  RunConfig echoed = parse_run_config(summary["config"].get<std::string>());
  REQUIRE(echoed.rounds == 3);

  fs::remove_all(dir);
}

TEST_CASE("experiment runs cover every algorithm end to end") {
  for (AlgorithmKind alg :
       {AlgorithmKind::fedavg, AlgorithmKind::fedprox, AlgorithmKind::fedbcd,
        AlgorithmKind::fedbcd_i}) {
    RunConfig c = tiny_config();
    c.algorithm = alg;
    if (alg == AlgorithmKind::fedbcd_i) c.penalty_weight = 0.2;
    SeedRunResult r = run_single_seed(c, 3);
    REQUIRE(r.records.size() == 6);
    for (const MetricsRecord& m : r.records) {
      REQUIRE(std::isfinite(m.objective_value));
      REQUIRE(m.personalized_accuracy_mean >= 0.0);
      REQUIRE(m.personalized_accuracy_mean <= 1.0);
      REQUIRE(m.global_accuracy >= 0.0);
      REQUIRE(m.global_accuracy <= 1.0);
      REQUIRE(m.consensus_max >= 0.0);
    }
    // simulated time accumulates
    for (std::size_t i = 1; i < r.records.size(); ++i)
      REQUIRE(r.records[i].sim_time >= r.records[i - 1].sim_time);
  }
}

TEST_CASE("latency study tables expose the ratio sweep") {
  auto exp1 = LatencyDistribution::exponential_mean(1.0);
  auto rows = run_latency_study(exp1, 10, {1, 5, 10}, 100000, 99);
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[2].b == 10);
  REQUIRE(rows[2].empirical == 1.0);
  REQUIRE(rows[2].beta == 1.0);

  // harmonic-sum oracle for the middle row
  double num = 0.0, den = 0.0;
  for (int j = 6; j <= 10; ++j) num += 1.0 / j;
  for (int j = 1; j <= 10; ++j) den += 1.0 / j;
  REQUIRE(rows[1].empirical == Catch::Approx(num / den).margin(0.01));

  std::string table = format_latency_table(rows);
  REQUIRE(table.find("empirical") != std::string::npos);
  REQUIRE(table.find("asymptotic") != std::string::npos);

  REQUIRE_THROWS_AS(run_latency_study(exp1, 10, {11}, 10, 1),
                    std::invalid_argument);
}
