#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedbcd/fedbcd.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

std::string resolve_out_dir(const std::string& flag_value,
                            const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("FEDBCD_OUT"); env != nullptr && *env != '\0')
    return env;
  return config_value;
}

void print_report(const fedbcd::ValidationReport& rep) {
  for (const std::string& e : rep.errors) std::cout << "error: " << e << "\n";
  for (const std::string& w : rep.warnings) std::cout << "warning: " << w << "\n";
}

int cmd_run(const std::string& config_path,
            const std::vector<std::uint64_t>& seed_override,
            const std::string& out_flag) {
  fedbcd::RunConfig cfg = fedbcd::load_run_config(config_path);
  if (!seed_override.empty()) cfg.seeds = seed_override;
  fedbcd::ValidationReport rep = fedbcd::validate(cfg);
  print_report(rep);
  if (!rep.ok()) return kExitValidation;

  std::string out_dir = resolve_out_dir(out_flag, cfg.out_dir);
  auto results = fedbcd::run_experiment(cfg, out_dir);
  for (const fedbcd::SeedRunResult& r : results) {
    const fedbcd::MetricsRecord& last = r.records.back();
    std::printf(
        "seed %llu: %d rounds, sim time %.3f s, objective %.6g, "
        "global acc %.4f, personalized acc %.4f\n",
        static_cast<unsigned long long>(r.seed), last.round, r.total_sim_time,
        last.objective_value, last.global_accuracy,
        last.personalized_accuracy_mean);
  }
  std::cout << "outputs written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_latency(const std::string& dist_spec, int n, std::vector<int> bs,
                const std::vector<double>& betas, int trials,
                std::uint64_t seed) {
  fedbcd::LatencyDistribution dist = fedbcd::parse_distribution(dist_spec);
  if (bs.empty() && betas.empty())
    throw fedbcd::ConfigError("latency: give --b or --beta");
  if (!bs.empty() && !betas.empty())
    throw fedbcd::ConfigError("latency: --b and --beta are exclusive");
  for (double beta : betas) {
    if (!(beta > 0.0) || beta > 1.0)
      throw fedbcd::ConfigError("latency: beta values must be in (0, 1]");
    int b = static_cast<int>(std::lround(beta * n));
    bs.push_back(std::min(n, std::max(1, b)));
  }
  std::set<int> unique(bs.begin(), bs.end());
  bs.assign(unique.begin(), unique.end());

  auto rows = fedbcd::run_latency_study(dist, n, bs, trials, seed);
  std::cout << "latency ratio study: dist " << dist_spec << ", n = " << n
            << ", trials = " << trials << "\n";
  std::cout << fedbcd::format_latency_table(rows);
  return kExitOk;
}

int cmd_partition_check(const std::string& config_path) {
  fedbcd::RunConfig cfg = fedbcd::load_run_config(config_path);
  fedbcd::ValidationReport rep = fedbcd::validate(cfg);
  print_report(rep);
  if (!rep.ok()) return kExitValidation;

  fedbcd::BuiltExperiment built = fedbcd::build_experiment(cfg, cfg.seeds.front());
  std::cout << "partition for seed " << cfg.seeds.front() << ":\n";
  for (int i = 0; i < built.problem.device_count(); ++i) {
    const fedbcd::LocalDataset& d = built.problem.dataset(i);
    std::map<int, int> hist;
    if (d.loss() != fedbcd::LossKind::least_squares)
      for (const fedbcd::Sample& s : d.samples())
        hist[d.loss() == fedbcd::LossKind::logistic
                 ? (s.label > 0 ? 1 : 0)
                 : static_cast<int>(s.label)]++;
    std::printf("device %3d  server %2d  samples %5zu  labels {", i,
                built.problem.server_of(i), d.size());
    bool first = true;
    for (const auto& [label, count] : hist) {
      std::printf("%s%d:%d", first ? "" : ", ", label, count);
      first = false;
    }
    std::printf("}\n");
  }
  return kExitOk;
}

int cmd_validate(const std::string& config_path) {
  fedbcd::RunConfig cfg = fedbcd::load_run_config(config_path);
  fedbcd::ValidationReport rep = fedbcd::validate(cfg);
  if (rep.ok()) {
    fedbcd::BuiltExperiment built =
        fedbcd::build_experiment(cfg, cfg.seeds.front());
    rep = fedbcd::validate_with_problem(cfg, built.problem);
  }
  print_report(rep);
  if (!rep.ok()) return kExitValidation;
  std::cout << "config ok"
            << (rep.warnings.empty() ? "" : " (with warnings)") << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulator for federated block coordinate descent"};
  app.require_subcommand(1);

  std::string run_config, run_out;
  std::vector<std::uint64_t> run_seeds;
  CLI::App* run_cmd =
      app.add_subcommand("run", "run an experiment described by a config file");
  run_cmd->add_option("--config", run_config, "config file path")->required();
  run_cmd->add_option("--seed", run_seeds, "override the config seed list")
      ->delimiter(',');
  run_cmd->add_option("--out", run_out, "output directory");

  std::string lat_dist;
  int lat_n = 0, lat_trials = 100000;
  std::uint64_t lat_seed = 1;
  std::vector<int> lat_bs;
  std::vector<double> lat_betas;
  CLI::App* lat_cmd = app.add_subcommand(
      "latency", "empirical vs asymptotic round-duration ratios");
  lat_cmd->add_option("--dist", lat_dist,
                      "distribution spec (exp:M | weibull:K:S | uniform:L:H | det:V)")
      ->required();
  lat_cmd->add_option("--n", lat_n, "number of servers")->required();
  lat_cmd->add_option("--b", lat_bs, "aggregation sizes")->delimiter(',');
  lat_cmd->add_option("--beta", lat_betas, "aggregation fractions in (0, 1]")
      ->delimiter(',');
  lat_cmd->add_option("--trials", lat_trials, "Monte Carlo trials");
  lat_cmd->add_option("--seed", lat_seed, "random seed");

  std::string pc_config;
  CLI::App* pc_cmd = app.add_subcommand(
      "partition-check", "print the per-device data partition for a config");
  pc_cmd->add_option("--config", pc_config, "config file path")->required();

  std::string val_config;
  CLI::App* val_cmd =
      app.add_subcommand("validate", "check a config against the run assumptions");
  val_cmd->add_option("--config", val_config, "config file path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_config, run_seeds, run_out);
    if (lat_cmd->parsed())
      return cmd_latency(lat_dist, lat_n, lat_bs, lat_betas, lat_trials, lat_seed);
    if (pc_cmd->parsed()) return cmd_partition_check(pc_config);
    if (val_cmd->parsed()) return cmd_validate(val_config);
  } catch (const fedbcd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
