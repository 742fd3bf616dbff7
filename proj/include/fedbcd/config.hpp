#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedbcd/latency.hpp"
#include "fedbcd/partition.hpp"
#include "fedbcd/protocol.hpp"

namespace fedbcd {

/// Thrown for problems a user can fix in the config file; the CLI maps it to
/// exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataSource { synthetic_gaussian, synthetic_linear, csv };

inline const char* to_string(DataSource s) {
  switch (s) {
    case DataSource::synthetic_gaussian: return "synthetic_gaussian";
    case DataSource::synthetic_linear: return "synthetic_linear";
    case DataSource::csv: return "csv";
  }
  return "?";
}

inline const char* to_string(ActivationMode m) {
  return m == ActivationMode::uniform ? "uniform" : "shortest_arrival";
}
inline const char* to_string(InitMode m) {
  return m == InitMode::consensus ? "consensus" : "spread";
}

/// Full experiment description; defaults follow the shipped profile.
struct RunConfig {
  // [run]
  AlgorithmKind algorithm = AlgorithmKind::fedbcd;
  ProtocolKind protocol = ProtocolKind::sync_cloud;
  int rounds = 200;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";

  // [topology]
  int servers = 10;
  int devices_per_server = 10;

  // [problem]
  LossKind loss = LossKind::multinomial_logistic;
  DataSource source = DataSource::synthetic_gaussian;
  int classes = 10;
  int features = 2;
  double class_separation = 1.0;
  double class_stddev = 0.8;
  double noise_stddev = 0.1;
  int samples_per_device = 600;
  int test_samples_per_device = 100;
  int diversity = 3;
  std::string csv_path;
  double box_lower = -2.0;
  double box_upper = 2.0;

  // [hyper]
  double edge_step = 0.005;
  double momentum = 0.9;
  double cloud_step = 0.5;
  double penalty_weight = 1.0;
  double proximal_weight = 5.0;
  int batch_size = 32;
  bool exact_gradient = false;
  int epochs_min = 1;
  int epochs_max = 5;
  int cloud_epochs = 1;
  int offline_budget = 4;
  int activation_count = 3;
  int offline_count = 8;
  int async_servers_per_round = 5;
  int coverage_period = 0;
  ActivationMode activation_mode = ActivationMode::shortest_arrival;
  InitMode init = InitMode::consensus;
  bool uniform_aggregate_weights = false;

  // [latency]
  LatencyDistribution arrival = LatencyDistribution::exponential_mean(2.0);
  LatencyDistribution process = LatencyDistribution::exponential_mean(1.0);
  bool independent_epoch_draws = false;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    seen_.insert(key);
    return it->second;
  }

  double num(const std::string& key, double fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    seen_.insert(key);
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: bad number for '" + key + "'");
    }
  }

  int integer(const std::string& key, int fallback) {
    double v = num(key, fallback);
    if (v != std::floor(v)) throw ConfigError("config: '" + key + "' must be an integer");
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    seen_.insert(key);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: '" + key + "' must be true or false");
  }

  std::vector<std::string> unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
      if (seen_.count(k) == 0) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: bad section header at line " +
                          std::to_string(line_no));
      section = config_detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " +
                        std::to_string(line_no));
    std::string key = config_detail::trim(line.substr(0, eq));
    std::string value = config_detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: empty key at line " + std::to_string(line_no));
    kv[section.empty() ? key : section + "." + key] = value;
  }

  config_detail::KvReader r(std::move(kv));
  RunConfig c;

  {
    std::string a = r.str("run.algorithm", "fedbcd");
    if (a == "fedavg") c.algorithm = AlgorithmKind::fedavg;
    else if (a == "fedprox") c.algorithm = AlgorithmKind::fedprox;
    else if (a == "fedbcd") c.algorithm = AlgorithmKind::fedbcd;
    else if (a == "fedbcd_i") c.algorithm = AlgorithmKind::fedbcd_i;
    else throw ConfigError("config: unknown algorithm '" + a + "'");

    std::string p = r.str("run.protocol", "sync");
    if (p == "sync") c.protocol = ProtocolKind::sync_cloud;
    else if (p == "async") c.protocol = ProtocolKind::async_cloud_simple;
    else if (p == "async_rigorous") c.protocol = ProtocolKind::async_cloud_rigorous;
    else throw ConfigError("config: unknown protocol '" + p + "'");

    c.rounds = r.integer("run.rounds", c.rounds);
    c.out_dir = r.str("run.out_dir", c.out_dir);
    std::string seeds = r.str("run.seeds", "1");
    c.seeds.clear();
    std::stringstream ss(seeds);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = config_detail::trim(tok);
      if (tok.empty()) continue;
      try {
        c.seeds.push_back(std::stoull(tok));
      } catch (const std::exception&) {
        throw ConfigError("config: bad seed '" + tok + "'");
      }
    }
    if (c.seeds.empty()) throw ConfigError("config: seeds must not be empty");
  }

  c.servers = r.integer("topology.servers", c.servers);
  c.devices_per_server = r.integer("topology.devices_per_server", c.devices_per_server);

  {
    std::string l = r.str("problem.loss", "multinomial_logistic");
    if (l == "least_squares") c.loss = LossKind::least_squares;
    else if (l == "logistic") c.loss = LossKind::logistic;
    else if (l == "multinomial_logistic") c.loss = LossKind::multinomial_logistic;
    else throw ConfigError("config: unknown loss '" + l + "'");

    std::string s = r.str("problem.source", "synthetic_gaussian");
    if (s == "synthetic_gaussian") c.source = DataSource::synthetic_gaussian;
    else if (s == "synthetic_linear") c.source = DataSource::synthetic_linear;
    else if (s == "csv") c.source = DataSource::csv;
    else throw ConfigError("config: unknown source '" + s + "'");

    c.classes = r.integer("problem.classes", c.classes);
    c.features = r.integer("problem.features", c.features);
    c.class_separation = r.num("problem.class_separation", c.class_separation);
    c.class_stddev = r.num("problem.class_stddev", c.class_stddev);
    c.noise_stddev = r.num("problem.noise_stddev", c.noise_stddev);
    c.samples_per_device = r.integer("problem.samples_per_device", c.samples_per_device);
    c.test_samples_per_device =
        r.integer("problem.test_samples_per_device", c.test_samples_per_device);
    c.diversity = r.integer("problem.diversity", c.diversity);
    c.csv_path = r.str("problem.csv_path", c.csv_path);
    c.box_lower = r.num("problem.box_lower", c.box_lower);
    c.box_upper = r.num("problem.box_upper", c.box_upper);
  }

  {
    c.edge_step = r.num("hyper.edge_step", c.edge_step);
    c.momentum = r.num("hyper.momentum", c.momentum);
    c.cloud_step = r.num("hyper.cloud_step", c.cloud_step);
    c.penalty_weight = r.num("hyper.penalty_weight", c.penalty_weight);
    c.proximal_weight = r.num("hyper.proximal_weight", c.proximal_weight);
    c.batch_size = r.integer("hyper.batch_size", c.batch_size);
    std::string g = r.str("hyper.gradient", "minibatch");
    if (g == "exact") c.exact_gradient = true;
    else if (g == "minibatch") c.exact_gradient = false;
    else throw ConfigError("config: gradient must be exact or minibatch");
    c.epochs_min = r.integer("hyper.epochs_min", c.epochs_min);
    c.epochs_max = r.integer("hyper.epochs_max", c.epochs_max);
    c.cloud_epochs = r.integer("hyper.cloud_epochs", c.cloud_epochs);
    c.offline_budget = r.integer("hyper.offline_budget", c.offline_budget);
    c.activation_count = r.integer("hyper.activation_count", c.activation_count);
    c.offline_count = r.integer("hyper.offline_count", c.offline_count);
    c.async_servers_per_round =
        r.integer("hyper.async_servers_per_round", c.async_servers_per_round);
    c.coverage_period = r.integer("hyper.coverage_period", c.coverage_period);
    std::string m = r.str("hyper.activation_mode", "shortest_arrival");
    if (m == "uniform") c.activation_mode = ActivationMode::uniform;
    else if (m == "shortest_arrival") c.activation_mode = ActivationMode::shortest_arrival;
    else throw ConfigError("config: unknown activation_mode '" + m + "'");
    std::string i = r.str("hyper.init", "consensus");
    if (i == "consensus") c.init = InitMode::consensus;
    else if (i == "spread") c.init = InitMode::spread;
    else throw ConfigError("config: unknown init '" + i + "'");
    c.uniform_aggregate_weights =
        r.boolean("hyper.uniform_aggregate_weights", c.uniform_aggregate_weights);
  }

  try {
    c.arrival = parse_distribution(r.str("latency.arrival", "exp:2"));
    c.process = parse_distribution(r.str("latency.process", "exp:1"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.independent_epoch_draws =
      r.boolean("latency.independent_epoch_draws", c.independent_epoch_draws);

  auto unknown = r.unknown_keys();
  if (!unknown.empty())
    throw ConfigError("config: unknown key '" + unknown.front() + "'");
  return c;
}

inline std::string serialize(const RunConfig& c) {
  using config_detail::fmt_double;
  std::ostringstream out;
  out << "[run]\n";
  out << "algorithm = " << to_string(c.algorithm) << "\n";
  out << "protocol = " << to_string(c.protocol) << "\n";
  out << "rounds = " << c.rounds << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i)
    out << (i ? "," : "") << c.seeds[i];
  out << "\n";
  out << "out_dir = " << c.out_dir << "\n";
  out << "\n[topology]\n";
  out << "servers = " << c.servers << "\n";
  out << "devices_per_server = " << c.devices_per_server << "\n";
  out << "\n[problem]\n";
  out << "loss = " << to_string(c.loss) << "\n";
  out << "source = " << to_string(c.source) << "\n";
  out << "classes = " << c.classes << "\n";
  out << "features = " << c.features << "\n";
  out << "class_separation = " << fmt_double(c.class_separation) << "\n";
  out << "class_stddev = " << fmt_double(c.class_stddev) << "\n";
  out << "noise_stddev = " << fmt_double(c.noise_stddev) << "\n";
  out << "samples_per_device = " << c.samples_per_device << "\n";
  out << "test_samples_per_device = " << c.test_samples_per_device << "\n";
  out << "diversity = " << c.diversity << "\n";
  if (!c.csv_path.empty()) out << "csv_path = " << c.csv_path << "\n";
  out << "box_lower = " << fmt_double(c.box_lower) << "\n";
  out << "box_upper = " << fmt_double(c.box_upper) << "\n";
  out << "\n[hyper]\n";
  out << "edge_step = " << fmt_double(c.edge_step) << "\n";
  out << "momentum = " << fmt_double(c.momentum) << "\n";
  out << "cloud_step = " << fmt_double(c.cloud_step) << "\n";
  out << "penalty_weight = " << fmt_double(c.penalty_weight) << "\n";
  out << "proximal_weight = " << fmt_double(c.proximal_weight) << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "gradient = " << (c.exact_gradient ? "exact" : "minibatch") << "\n";
  out << "epochs_min = " << c.epochs_min << "\n";
  out << "epochs_max = " << c.epochs_max << "\n";
  out << "cloud_epochs = " << c.cloud_epochs << "\n";
  out << "offline_budget = " << c.offline_budget << "\n";
  out << "activation_count = " << c.activation_count << "\n";
  out << "offline_count = " << c.offline_count << "\n";
  out << "async_servers_per_round = " << c.async_servers_per_round << "\n";
  out << "coverage_period = " << c.coverage_period << "\n";
  out << "activation_mode = " << to_string(c.activation_mode) << "\n";
  out << "init = " << to_string(c.init) << "\n";
  out << "uniform_aggregate_weights = "
      << (c.uniform_aggregate_weights ? "true" : "false") << "\n";
  out << "\n[latency]\n";
  out << "arrival = " << serialize_distribution(c.arrival) << "\n";
  out << "process = " << serialize_distribution(c.process) << "\n";
  out << "independent_epoch_draws = "
      << (c.independent_epoch_draws ? "true" : "false") << "\n";
  return out.str();
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

/// Curvature estimate for the stepsize checks: the top eigenvalue of the
/// mean feature second-moment matrix, scaled by the loss curvature cap.
inline double smoothness_estimate(const LocalDataset& d) {
  std::size_t m = d.feature_dim();
  std::vector<double> v(m, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    std::vector<double> w(m, 0.0);
    for (const Sample& s : d.samples()) {
      double proj = 0.0;
      for (std::size_t j = 0; j < m; ++j) proj += s.features[j] * v[j];
      proj /= static_cast<double>(d.size());
      for (std::size_t j = 0; j < m; ++j) w[j] += proj * s.features[j];
    }
    double nrm = 0.0;
    for (double x : w) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) return 0.0;
    lambda = nrm;
    for (std::size_t j = 0; j < m; ++j) v[j] = w[j] / nrm;
  }
  switch (d.loss()) {
    case LossKind::least_squares: return lambda;
    case LossKind::logistic: return 0.25 * lambda;
    case LossKind::multinomial_logistic: return 0.5 * lambda;
  }
  return lambda;
}

/// Structural checks; every error here maps to CLI exit code 2.
inline ValidationReport validate(const RunConfig& c) {
  ValidationReport rep;
  auto err = [&](const std::string& m) { rep.errors.push_back(m); };

  if (c.rounds < 0) err("rounds must be >= 0");
  if (c.servers < 1) err("servers must be >= 1");
  if (c.devices_per_server < 1) err("devices_per_server must be >= 1");
  if (c.seeds.empty()) err("seeds must not be empty");
  if (!(c.box_lower < c.box_upper)) err("box_lower must be < box_upper");

  if (!(c.edge_step > 0)) err("edge_step must be > 0");
  if (c.momentum < 0 || c.momentum >= 1) err("momentum must be in [0, 1)");
  if (c.cloud_step < 0) err("cloud_step must be >= 0");
  if (!(c.penalty_weight > 0)) err("penalty_weight must be > 0");
  if (c.algorithm == AlgorithmKind::fedbcd_i && c.penalty_weight > 1.0)
    err("fedbcd_i requires penalty_weight in (0, 1]");
  if (c.algorithm == AlgorithmKind::fedprox && !(c.proximal_weight > 0))
    err("proximal_weight must be > 0");
  if (!c.exact_gradient && c.batch_size < 1) err("batch_size must be >= 1");
  if (c.epochs_min < 1 || c.epochs_min > c.epochs_max)
    err("need 1 <= epochs_min <= epochs_max");
  if (c.cloud_epochs < 1) err("cloud_epochs must be >= 1");
  if (c.offline_budget < 0) err("offline_budget must be >= 0");

  if ((c.algorithm == AlgorithmKind::fedavg ||
       c.algorithm == AlgorithmKind::fedprox) &&
      c.protocol != ProtocolKind::sync_cloud)
    err("fedavg/fedprox run under the sync protocol only");

  if (c.protocol != ProtocolKind::sync_cloud &&
      (c.async_servers_per_round < 1 || c.async_servers_per_round > c.servers))
    err("async_servers_per_round must be in [1, servers]");

  if (c.activation_count < 0 || c.activation_count > c.devices_per_server)
    err("activation_count must be in [0, devices_per_server]");
  if (c.algorithm == AlgorithmKind::fedbcd_i &&
      (c.offline_count < c.activation_count ||
       c.offline_count > c.devices_per_server))
    err("offline_count must lie between activation_count and devices_per_server");

  if (c.coverage_period > 0) {
    if (c.activation_count < 1)
      err("coverage enforcement needs activation_count >= 1");
    else if (c.activation_count * c.coverage_period < c.devices_per_server)
      err("coverage infeasible: activation_count * coverage_period < devices_per_server");
  }

  if (c.loss == LossKind::least_squares) {
    if (c.source == DataSource::synthetic_gaussian)
      err("least_squares needs synthetic_linear or csv data");
  } else {
    if (c.source == DataSource::synthetic_linear)
      err("synthetic_linear data is for least_squares");
    if (c.loss == LossKind::logistic && c.classes != 2)
      err("logistic loss needs classes = 2");
    if (c.loss == LossKind::multinomial_logistic && c.classes < 2)
      err("multinomial loss needs classes >= 2");
    if (c.diversity < 1 || c.diversity > c.classes)
      err("diversity must be in [1, classes]");
  }
  if (c.source == DataSource::csv && c.csv_path.empty())
    err("csv source needs csv_path");
  if (c.features < 1) err("features must be >= 1");
  if (c.samples_per_device < 1) err("samples_per_device must be >= 1");
  if (c.test_samples_per_device < 0) err("test_samples_per_device must be >= 0");
  return rep;
}

/// Adds the stepsize/momentum bound checks that need data curvature.
/// Violations are warnings: the run proceeds, the guarantees may not.
inline ValidationReport validate_with_problem(const RunConfig& c,
                                              const FedProblem& problem) {
  ValidationReport rep = validate(c);
  auto warn = [&](const std::string& m) { rep.warnings.push_back(m); };

  double worst_lips = 0.0;
  for (int i = 0; i < problem.device_count(); ++i)
    worst_lips = std::max(worst_lips, smoothness_estimate(problem.dataset(i)));

  double edge_bound = 1.0 / (worst_lips + c.penalty_weight);
  if (c.edge_step > edge_bound) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "edge_step %.6g exceeds the smoothness bound 1/(L+gamma) ~= %.6g",
                  c.edge_step, edge_bound);
    warn(buf);
  }

  int worst_q = 0;
  if (c.protocol == ProtocolKind::sync_cloud) {
    worst_q = problem.device_count();  // one logical server
  } else {
    for (int n = 0; n < problem.server_count(); ++n)
      worst_q = std::max(worst_q, static_cast<int>(problem.devices_of(n).size()));
  }
  double cloud_bound = 1.0 / (c.penalty_weight * worst_q);
  if (c.cloud_step > cloud_bound) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "cloud_step %.6g exceeds 1/(max gamma * max devices) ~= %.6g",
                  c.cloud_step, cloud_bound);
    warn(buf);
  }

  double rho = worst_lips + c.penalty_weight;
  double momentum_bound = 1.0 / std::sqrt(1.0 + rho * c.edge_step);
  if (c.momentum >= momentum_bound) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "momentum %.6g is at or above the bound 1/sqrt(1+rho*step) ~= %.6g",
                  c.momentum, momentum_bound);
    warn(buf);
  }
  return rep;
}

inline EngineConfig to_engine_config(const RunConfig& c) {
  EngineConfig e;
  e.algorithm = c.algorithm;
  e.protocol = c.protocol;
  e.async_servers_per_round = c.async_servers_per_round;
  e.edge.step_size = c.edge_step;
  e.edge.momentum = c.momentum;
  e.edge.epochs_min = c.epochs_min;
  e.edge.epochs_max = c.epochs_max;
  e.edge.batch_size = c.batch_size;
  e.edge.exact_gradient = c.exact_gradient;
  e.edge.offline_budget = c.offline_budget;
  e.cloud_step = c.cloud_step;
  e.cloud_epochs = c.cloud_epochs;
  e.proximal_weight = c.proximal_weight;
  e.uniform_aggregate_weights = c.uniform_aggregate_weights;
  e.sampler.per_server_count = c.activation_count;
  e.sampler.offline_count = c.offline_count;
  e.sampler.coverage_period = c.coverage_period;
  e.sampler.mode = c.activation_mode;
  e.latency.arrival = c.arrival;
  e.latency.process = c.process;
  e.latency.independent_epoch_draws = c.independent_epoch_draws;
  e.init = c.init;
  return e;
}

struct BuiltExperiment {
  FedProblem problem;
  EvalData eval;
  EngineConfig engine;
};

/// Generates (or loads) the data pools, partitions them across devices and
/// assembles the runnable problem. Seed-dependent.
inline BuiltExperiment build_experiment(const RunConfig& c, std::uint64_t seed) {
  ValidationReport rep = validate(c);
  if (!rep.ok()) throw ConfigError("config: " + rep.errors.front());

  const int devices = c.servers * c.devices_per_server;
  BoxSet box(c.box_lower, c.box_upper);
  RngStream data_rng = substream(seed, StreamTag::dataset);

  std::vector<LocalDataset> train;
  EvalData eval;

  if (c.loss == LossKind::least_squares) {
    std::vector<Sample> pool;
    if (c.source == DataSource::csv) {
      pool = load_csv_pool(c.csv_path);
    } else {
      LinearSpec spec{c.features, c.noise_stddev};
      pool = make_linear_pool(spec, devices * c.samples_per_device, box, data_rng);
    }
    train = partition_random(pool, c.loss, 0, devices, c.samples_per_device,
                             data_rng);
  } else {
    std::vector<Sample> pool, test_pool;
    if (c.source == DataSource::csv) {
      pool = load_csv_pool(c.csv_path);
    } else {
      GaussianSpec spec{c.classes, c.features, c.class_separation, c.class_stddev};
      pool = make_gaussian_pool(spec, devices * c.samples_per_device, data_rng);
      if (c.test_samples_per_device > 0)
        test_pool = make_gaussian_pool(spec, devices * c.test_samples_per_device,
                                       data_rng);
    }
    PartitionSpec spec{c.diversity, c.samples_per_device};
    train = partition_by_diversity(pool, c.loss, c.classes, devices, spec,
                                   data_rng);
    if (!test_pool.empty()) {
      PartitionSpec test_spec{c.diversity, c.test_samples_per_device};
      eval.device_tests = partition_by_diversity(test_pool, c.loss, c.classes,
                                                 devices, test_spec, data_rng);
      // the global test set pools every device's held-out data
      std::vector<Sample> all;
      for (const LocalDataset& d : eval.device_tests)
        for (const Sample& s : d.samples()) all.push_back(s);
      eval.global_test.emplace(
          c.loss, std::move(all),
          c.loss == LossKind::multinomial_logistic ? c.classes : 0);
    }
  }

  std::vector<int> device_server(static_cast<std::size_t>(devices));
  for (int i = 0; i < devices; ++i)
    device_server[static_cast<std::size_t>(i)] = i / c.devices_per_server;
  std::vector<double> penalty(static_cast<std::size_t>(devices), c.penalty_weight);

  FedProblem problem(c.servers, std::move(device_server), std::move(train),
                     std::move(penalty), box);
  EngineConfig engine = to_engine_config(c);
  validate_engine(engine, problem);
  return BuiltExperiment{std::move(problem), std::move(eval), engine};
}

}  // namespace fedbcd
