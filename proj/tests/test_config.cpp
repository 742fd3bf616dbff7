#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "fedbcd/config.hpp"
#include "fedbcd/experiment.hpp"

using namespace fedbcd;

TEST_CASE("defaults carry the shipped hyperparameter profile") {
  RunConfig c;
  REQUIRE(c.edge_step == 0.005);
  REQUIRE(c.momentum == 0.9);
  REQUIRE(c.cloud_step == 0.5);
  REQUIRE(c.penalty_weight == 1.0);
  REQUIRE(c.proximal_weight == 5.0);
  REQUIRE(c.batch_size == 32);
  REQUIRE(c.epochs_min == 1);
  REQUIRE(c.epochs_max == 5);
  REQUIRE(c.box_lower == -2.0);
  REQUIRE(c.box_upper == 2.0);
  REQUIRE(c.offline_budget == 4);
  REQUIRE(c.offline_count == 8);
  REQUIRE(c.arrival.kind == LatencyDistribution::Kind::exponential);
  REQUIRE(c.arrival.a == 2.0);
  REQUIRE(c.process.a == 1.0);
  REQUIRE(c.servers == 10);
  REQUIRE(c.devices_per_server == 10);
}

TEST_CASE("configs round trip through text") {
  RunConfig c;
  c.algorithm = AlgorithmKind::fedbcd_i;
  c.penalty_weight = 0.2;
  c.protocol = ProtocolKind::async_cloud_rigorous;
  c.async_servers_per_round = 4;
  c.seeds = {3, 14, 159};
  c.loss = LossKind::logistic;
  c.classes = 2;
  c.diversity = 1;
  c.arrival = LatencyDistribution::weibull(0.5, 2.0);
  c.exact_gradient = true;
  c.coverage_period = 7;
  c.init = InitMode::spread;
  c.uniform_aggregate_weights = true;

  std::string text = serialize(c);
  RunConfig back = parse_run_config(text);
  REQUIRE(serialize(back) == text);
}

TEST_CASE("parser accepts comments and blank lines") {
  std::string text =
      "# top comment\n"
      "[run]\n"
      "algorithm = fedavg  ; trailing comment\n"
      "\n"
      "rounds = 17\n";
  RunConfig c = parse_run_config(text);
  REQUIRE(c.algorithm == AlgorithmKind::fedavg);
  REQUIRE(c.rounds == 17);
  REQUIRE(c.momentum == 0.9);  // untouched default
}

TEST_CASE("parser rejects malformed input") {
  REQUIRE_THROWS_AS(parse_run_config("[run\nrounds = 1\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_run_config("[run]\nrounds\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_run_config("[run]\nrounds = abc\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_run_config("[run]\nalgorithm = sgd\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_run_config("[run]\nseeds = ,\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_run_config("[run]\nmystery = 1\n"), ConfigError);
  REQUIRE_THROWS_AS(parse_run_config("[hyper]\ngradient = maybe\n"), ConfigError);
}

TEST_CASE("structural validation catches bad settings") {
  auto errors_of = [](RunConfig c) { return validate(c).errors; };

  RunConfig ok;
  REQUIRE(validate(ok).ok());

  RunConfig bad_b;
  bad_b.protocol = ProtocolKind::async_cloud_simple;
  bad_b.async_servers_per_round = 99;
  REQUIRE_FALSE(errors_of(bad_b).empty());

  RunConfig baseline_async;
  baseline_async.algorithm = AlgorithmKind::fedavg;
  baseline_async.protocol = ProtocolKind::async_cloud_simple;
  baseline_async.async_servers_per_round = 2;
  REQUIRE_FALSE(errors_of(baseline_async).empty());

  RunConfig split_pull;
  split_pull.algorithm = AlgorithmKind::fedbcd_i;
  split_pull.penalty_weight = 1.5;
  REQUIRE_FALSE(errors_of(split_pull).empty());

  RunConfig diversity;
  diversity.diversity = 11;
  REQUIRE_FALSE(errors_of(diversity).empty());

  RunConfig coverage;
  coverage.coverage_period = 2;
  coverage.activation_count = 3;  // 3 * 2 < 10
  REQUIRE_FALSE(errors_of(coverage).empty());

  RunConfig mismatch;
  mismatch.loss = LossKind::least_squares;
  mismatch.source = DataSource::synthetic_gaussian;
  REQUIRE_FALSE(errors_of(mismatch).empty());

  RunConfig csv_missing;
  csv_missing.source = DataSource::csv;
  REQUIRE_FALSE(errors_of(csv_missing).empty());

  RunConfig logistic;
  logistic.loss = LossKind::logistic;
  logistic.classes = 5;
  REQUIRE_FALSE(errors_of(logistic).empty());
}

TEST_CASE("assumption checks warn about oversized steps") {
  RunConfig c;
  c.servers = 1;
  c.devices_per_server = 2;
  c.activation_count = 2;
  c.offline_count = 2;
  c.samples_per_device = 30;
  c.test_samples_per_device = 0;
  c.classes = 4;
  c.diversity = 2;
  BuiltExperiment built = build_experiment(c, 1);

  RunConfig gentle = c;
  gentle.edge_step = 1e-4;
  gentle.momentum = 0.0;
  gentle.cloud_step = 1e-3;
  REQUIRE(validate_with_problem(gentle, built.problem).warnings.empty());

  RunConfig harsh = c;
  harsh.edge_step = 100.0;
  harsh.cloud_step = 100.0;
  harsh.momentum = 0.999999;
  auto rep = validate_with_problem(harsh, built.problem);
  REQUIRE(rep.warnings.size() == 3);
}

TEST_CASE("build_experiment assembles a runnable problem") {
  RunConfig c;
  c.servers = 2;
  c.devices_per_server = 5;
  c.classes = 4;
  c.diversity = 2;
  c.samples_per_device = 40;
  c.test_samples_per_device = 10;
  BuiltExperiment built = build_experiment(c, 7);

  REQUIRE(built.problem.server_count() == 2);
  REQUIRE(built.problem.device_count() == 10);
  REQUIRE(built.problem.dimension() == 4 * 2);  // classes x features
  REQUIRE(built.eval.device_tests.size() == 10);
  REQUIRE(built.eval.global_test.has_value());
  REQUIRE(built.eval.global_test->size() == 100);  // union of device tests
  for (int i = 0; i < 10; ++i) REQUIRE(built.problem.penalty(i) == 1.0);

  // regression problems skip the accuracy sets
  RunConfig lin;
  lin.loss = LossKind::least_squares;
  lin.source = DataSource::synthetic_linear;
  lin.servers = 1;
  lin.devices_per_server = 3;
  lin.features = 4;
  lin.samples_per_device = 20;
  BuiltExperiment blin = build_experiment(lin, 7);
  REQUIRE(blin.problem.dimension() == 4);
  REQUIRE(blin.eval.device_tests.empty());
  REQUIRE_FALSE(blin.eval.global_test.has_value());

  RunConfig broken;
  broken.diversity = 99;
  REQUIRE_THROWS_AS(build_experiment(broken, 1), ConfigError);
}

TEST_CASE("csv-backed experiments build end to end") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path();

  // classification pool with four classes
  fs::path cls = dir / "fedbcd_cfg_cls.csv";
  {
    std::ofstream out(cls);
    out << "f0,f1,label\n";
    RngStream rng(1);
    for (int i = 0; i < 240; ++i)
      out << rng.uniform(-1, 1) << "," << rng.uniform(-1, 1) << "," << i % 4
          << "\n";
  }
  RunConfig c;
  c.source = DataSource::csv;
  c.csv_path = cls.string();
  c.classes = 4;
  c.diversity = 2;
  c.servers = 2;
  c.devices_per_server = 2;
  c.activation_count = 2;
  c.offline_count = 2;
  c.samples_per_device = 30;
  c.test_samples_per_device = 0;
  BuiltExperiment built = build_experiment(c, 1);
  REQUIRE(built.problem.device_count() == 4);
  REQUIRE(built.problem.dimension() == 8);
  REQUIRE(built.eval.device_tests.empty());  // csv ships no held-out split

  // regression pool
  fs::path reg = dir / "fedbcd_cfg_reg.csv";
  {
    std::ofstream out(reg);
    out << "f0,f1,f2,label\n";
    RngStream rng(2);
    for (int i = 0; i < 100; ++i)
      out << rng.uniform(-1, 1) << "," << rng.uniform(-1, 1) << ","
          << rng.uniform(-1, 1) << "," << rng.uniform(-1, 1) << "\n";
  }
  RunConfig r;
  r.loss = LossKind::least_squares;
  r.source = DataSource::csv;
  r.csv_path = reg.string();
  r.servers = 1;
  r.devices_per_server = 4;
  r.activation_count = 2;
  r.offline_count = 2;
  r.samples_per_device = 25;
  r.test_samples_per_device = 0;
  BuiltExperiment rbuilt = build_experiment(r, 1);
  REQUIRE(rbuilt.problem.dimension() == 3);
  SeedRunResult run = [&] {
    RunConfig rr = r;
    rr.rounds = 3;
    return run_single_seed(rr, 1);
  }();
  REQUIRE(run.records.size() == 4);

  fs::remove(cls);
  fs::remove(reg);
}

TEST_CASE("smoothness estimates match the loss curvature caps") {
  std::vector<Sample> samples{{{2.0}, 1.0}, {{2.0}, -1.0}};
  LocalDataset ls(LossKind::least_squares, samples);
  REQUIRE(smoothness_estimate(ls) == Catch::Approx(4.0));
  LocalDataset lg(LossKind::logistic, samples);
  REQUIRE(smoothness_estimate(lg) == Catch::Approx(1.0));
}
