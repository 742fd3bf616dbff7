#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fedbcd/baselines.hpp"
#include "fedbcd/cloud.hpp"
#include "fedbcd/edge.hpp"
#include "fedbcd/latency.hpp"
#include "fedbcd/metrics.hpp"
#include "fedbcd/model.hpp"
#include "fedbcd/rng.hpp"

namespace fedbcd {

enum class ProtocolKind { sync_cloud, async_cloud_simple, async_cloud_rigorous };
enum class AlgorithmKind { fedavg, fedprox, fedbcd, fedbcd_i };
enum class ActivationMode { uniform, shortest_arrival };
enum class InitMode { consensus, spread };

inline const char* to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::sync_cloud: return "sync";
    case ProtocolKind::async_cloud_simple: return "async";
    case ProtocolKind::async_cloud_rigorous: return "async_rigorous";
  }
  return "?";
}

inline const char* to_string(AlgorithmKind a) {
  switch (a) {
    case AlgorithmKind::fedavg: return "fedavg";
    case AlgorithmKind::fedprox: return "fedprox";
    case AlgorithmKind::fedbcd: return "fedbcd";
    case AlgorithmKind::fedbcd_i: return "fedbcd_i";
  }
  return "?";
}

/// Per-round device sampling policy.
struct ActivationSampler {
  int per_server_count = 3;   // communicating devices per server per round
  int offline_count = 8;      // offline-training superset size (split variant)
  int coverage_period = 0;    // every device activates within this many rounds; 0 = off
  ActivationMode mode = ActivationMode::shortest_arrival;
};

struct LatencyConfig {
  LatencyDistribution arrival = LatencyDistribution::exponential_mean(2.0);
  LatencyDistribution process = LatencyDistribution::exponential_mean(1.0);
  bool independent_epoch_draws = false;
};

struct EngineConfig {
  AlgorithmKind algorithm = AlgorithmKind::fedbcd;
  ProtocolKind protocol = ProtocolKind::sync_cloud;
  int async_servers_per_round = 1;  // servers per async aggregation
  EdgeHyper edge;
  double cloud_step = 0.5;
  int cloud_epochs = 1;
  double proximal_weight = 5.0;        // fedprox
  bool uniform_aggregate_weights = false;  // fedavg/fedprox
  ActivationSampler sampler;
  LatencyConfig latency;
  InitMode init = InitMode::consensus;
};

struct RoundEvent {
  enum class Kind {
    device_request,
    device_upload,
    server_ready,
    coordinator_aggregate,
    broadcast
  };
  Kind kind;
  int actor;  // device or server id; -1 for the coordinator
  double sim_time;
};

inline const char* to_string(RoundEvent::Kind k) {
  switch (k) {
    case RoundEvent::Kind::device_request: return "device_request";
    case RoundEvent::Kind::device_upload: return "device_upload";
    case RoundEvent::Kind::server_ready: return "server_ready";
    case RoundEvent::Kind::coordinator_aggregate: return "coordinator_aggregate";
    case RoundEvent::Kind::broadcast: return "broadcast";
  }
  return "?";
}

/// Whole-simulation state: one edge state per device, per-server global
/// models, and the servers' cached copies of the last uploaded device models.
struct SimState {
  std::vector<EdgeState> edge;
  CloudState cloud;
  std::vector<ModelVec> uploaded;
  int round = 0;
  double sim_time = 0.0;
  std::uint64_t seed = 0;
};

/// Held-out data used for the accuracy columns.
struct EvalData {
  std::vector<LocalDataset> device_tests;
  std::optional<LocalDataset> global_test;
};

inline void validate_engine(const EngineConfig& cfg, const FedProblem& problem) {
  validate(cfg.edge);
  if (cfg.cloud_step < 0)
    throw std::invalid_argument("engine: cloud_step must be >= 0");
  if (cfg.cloud_epochs < 1)
    throw std::invalid_argument("engine: cloud_epochs must be >= 1");
  if (cfg.protocol != ProtocolKind::sync_cloud) {
    int b = cfg.async_servers_per_round;
    if (b < 1 || b > problem.server_count())
      throw std::invalid_argument(
          "engine: async_servers_per_round must be in [1, servers]");
  }
  if ((cfg.algorithm == AlgorithmKind::fedavg ||
       cfg.algorithm == AlgorithmKind::fedprox) &&
      cfg.protocol != ProtocolKind::sync_cloud)
    throw std::invalid_argument("engine: baselines run under the sync protocol only");
  if (cfg.algorithm == AlgorithmKind::fedprox && !(cfg.proximal_weight > 0))
    throw std::invalid_argument("engine: proximal weight must be > 0");
  for (int n = 0; n < problem.server_count(); ++n) {
    int q = static_cast<int>(problem.devices_of(n).size());
    if (cfg.sampler.per_server_count < 0 || cfg.sampler.per_server_count > q)
      throw std::invalid_argument(
          "engine: per-server activation count exceeds the device pool");
    if (cfg.algorithm == AlgorithmKind::fedbcd_i &&
        (cfg.sampler.offline_count < cfg.sampler.per_server_count ||
         cfg.sampler.offline_count > q))
      throw std::invalid_argument(
          "engine: offline count must lie between the activation count and the pool");
  }
  if (cfg.algorithm == AlgorithmKind::fedbcd_i) {
    for (int i = 0; i < problem.device_count(); ++i)
      if (problem.penalty(i) > 1.0)
        throw std::invalid_argument(
            "engine: split-update pull weights must be in (0, 1]");
  }
  if (cfg.sampler.coverage_period > 0) {
    if (cfg.sampler.per_server_count < 1)
      throw std::invalid_argument(
          "engine: coverage enforcement needs a positive activation count");
    for (int n = 0; n < problem.server_count(); ++n) {
      int q = static_cast<int>(problem.devices_of(n).size());
      if (cfg.sampler.per_server_count * cfg.sampler.coverage_period < q)
        throw std::invalid_argument(
            "engine: coverage period too short for the activation count");
    }
  }
}

inline SimState init_sim_state(const FedProblem& problem,
                               const EngineConfig& cfg, std::uint64_t seed) {
  SimState s;
  s.seed = seed;
  const BoxSet& box = problem.box();
  ModelVec mid(problem.dimension(), 0.5 * (box.lower + box.upper));

  std::vector<ModelVec> server_init(
      static_cast<std::size_t>(problem.server_count()), mid);
  if (cfg.init == InitMode::spread) {
    for (int n = 0; n < problem.server_count(); ++n) {
      RngStream r = substream(seed, StreamTag::init, static_cast<std::uint64_t>(n));
      ModelVec z(problem.dimension());
      for (std::size_t j = 0; j < z.size(); ++j)
        z[j] = r.uniform(box.lower, box.upper);
      server_init[static_cast<std::size_t>(n)] = std::move(z);
    }
  }

  s.cloud.z = server_init;
  s.cloud.last_mixed = server_init;
  s.edge.reserve(static_cast<std::size_t>(problem.device_count()));
  s.uploaded.reserve(static_cast<std::size_t>(problem.device_count()));
  for (int i = 0; i < problem.device_count(); ++i) {
    const ModelVec& init = server_init[static_cast<std::size_t>(problem.server_of(i))];
    EdgeState e = make_edge_state(init);
    if (cfg.sampler.coverage_period > 0) {
      // stagger virtual activation times so coverage cohorts stay small
      const auto& peers = problem.devices_of(problem.server_of(i));
      int pos = static_cast<int>(std::find(peers.begin(), peers.end(), i) -
                                 peers.begin());
      e.last_active_round = -1 - (pos % cfg.sampler.coverage_period);
    }
    s.edge.push_back(std::move(e));
    s.uploaded.push_back(init);
  }
  return s;
}

/// Per-round sampling outcome. Device-indexed arrays are zero where a device
/// is not involved.
struct ActivationPlan {
  std::vector<std::vector<int>> active;   // per server, ascending
  std::vector<std::vector<int>> offline;  // split variant: superset of active
  std::vector<int> epochs;                // per device
  std::vector<double> arrival;            // per device
  std::vector<double> device_latency;     // per device, active only
  std::vector<double> server_latency;     // per server
};

inline ActivationPlan sample_activations(const FedProblem& problem,
                                         const EngineConfig& cfg,
                                         const std::vector<EdgeState>& edge,
                                         int round, std::uint64_t seed) {
  const int servers = problem.server_count();
  const int devices = problem.device_count();
  ActivationPlan plan;
  plan.active.resize(static_cast<std::size_t>(servers));
  plan.offline.resize(static_cast<std::size_t>(servers));
  plan.epochs.assign(static_cast<std::size_t>(devices), 0);
  plan.arrival.assign(static_cast<std::size_t>(devices), 0.0);
  plan.device_latency.assign(static_cast<std::size_t>(devices), 0.0);
  plan.server_latency.assign(static_cast<std::size_t>(servers), 0.0);

  const bool split = cfg.algorithm == AlgorithmKind::fedbcd_i;

  for (int n = 0; n < servers; ++n) {
    const std::vector<int>& pool = problem.devices_of(n);
    for (int i : pool) {
      RngStream r = substream(seed, StreamTag::arrival,
                              static_cast<std::uint64_t>(round),
                              static_cast<std::uint64_t>(i));
      plan.arrival[static_cast<std::size_t>(i)] = sample(cfg.latency.arrival, r);
    }

    int count = cfg.sampler.per_server_count;
    std::vector<int> chosen;
    std::vector<int> remaining = pool;

    if (cfg.sampler.coverage_period > 0) {
      std::vector<int> forced;
      for (int i : pool)
        if (edge[static_cast<std::size_t>(i)].last_active_round <=
            round - cfg.sampler.coverage_period)
          forced.push_back(i);
      std::sort(forced.begin(), forced.end(), [&](int a, int b) {
        int la = edge[static_cast<std::size_t>(a)].last_active_round;
        int lb = edge[static_cast<std::size_t>(b)].last_active_round;
        return la != lb ? la < lb : a < b;
      });
      if (static_cast<int>(forced.size()) > count)
        forced.resize(static_cast<std::size_t>(count));
      chosen = forced;
      for (int i : chosen) std::erase(remaining, i);
    }

    RngStream pick = substream(seed, StreamTag::activation,
                               static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(n));
    auto fill = [&](std::vector<int>& dst, int want) {
      if (want <= 0) return;
      want = std::min(want, static_cast<int>(remaining.size()));
      if (cfg.sampler.mode == ActivationMode::uniform) {
        auto pos = pick.sample_without_replacement(
            static_cast<int>(remaining.size()), want);
        std::vector<int> taken;
        for (int j : pos) taken.push_back(remaining[static_cast<std::size_t>(j)]);
        for (int i : taken) {
          dst.push_back(i);
          std::erase(remaining, i);
        }
      } else {
        std::vector<int> by_arrival = remaining;
        std::sort(by_arrival.begin(), by_arrival.end(), [&](int a, int b) {
          double ta = plan.arrival[static_cast<std::size_t>(a)];
          double tb = plan.arrival[static_cast<std::size_t>(b)];
          return ta != tb ? ta < tb : a < b;
        });
        for (int j = 0; j < want; ++j) {
          dst.push_back(by_arrival[static_cast<std::size_t>(j)]);
          std::erase(remaining, by_arrival[static_cast<std::size_t>(j)]);
        }
      }
    };

    fill(chosen, count - static_cast<int>(chosen.size()));
    std::sort(chosen.begin(), chosen.end());
    plan.active[static_cast<std::size_t>(n)] = chosen;

    std::vector<int> training = chosen;
    if (split) {
      fill(training, cfg.sampler.offline_count - static_cast<int>(training.size()));
      std::sort(training.begin(), training.end());
    }
    plan.offline[static_cast<std::size_t>(n)] = training;

    for (int i : training)
      plan.epochs[static_cast<std::size_t>(i)] =
          draw_epoch_count(cfg.edge, seed, round, i);

    double worst = 0.0;
    for (int i : chosen) {
      RngStream pr = substream(seed, StreamTag::process,
                               static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(i));
      int k = plan.epochs[static_cast<std::size_t>(i)];
      double proc = 0.0;
      if (cfg.latency.independent_epoch_draws) {
        for (int e = 0; e < k; ++e) proc += sample(cfg.latency.process, pr);
      } else {
        proc = k * sample(cfg.latency.process, pr);
      }
      double tau = plan.arrival[static_cast<std::size_t>(i)] + proc;
      plan.device_latency[static_cast<std::size_t>(i)] = tau;
      worst = std::max(worst, tau);
    }
    plan.server_latency[static_cast<std::size_t>(n)] = worst;
  }
  return plan;
}

struct RoundResult {
  MetricsRecord metrics;
  std::vector<RoundEvent> events;
  std::vector<int> participating_servers;  // ascending
  double round_latency = 0.0;
};

namespace protocol_detail {

inline int event_rank(RoundEvent::Kind k) { return static_cast<int>(k); }

inline void sort_events(std::vector<RoundEvent>& ev) {
  std::stable_sort(ev.begin(), ev.end(), [](const RoundEvent& a,
                                            const RoundEvent& b) {
    if (a.sim_time != b.sim_time) return a.sim_time < b.sim_time;
    if (a.kind != b.kind) return event_rank(a.kind) < event_rank(b.kind);
    return a.actor < b.actor;
  });
}

/// Servers holding the smallest latencies; ties go to the lower id.
inline std::vector<int> fastest_servers(const std::vector<double>& latency,
                                        int count) {
  std::vector<int> order(latency.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double ta = latency[static_cast<std::size_t>(a)];
    double tb = latency[static_cast<std::size_t>(b)];
    return ta != tb ? ta < tb : a < b;
  });
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  return order;
}

inline std::vector<const ModelVec*> device_states(const SimState& sim) {
  std::vector<const ModelVec*> out;
  out.reserve(sim.edge.size());
  for (const EdgeState& e : sim.edge) out.push_back(&e.x_curr);
  return out;
}

inline double accuracy_or_zero(const ModelVec& model, const LocalDataset* data) {
  if (data == nullptr || data->loss() == LossKind::least_squares) return 0.0;
  return evaluate_accuracy(model, *data);
}

}  // namespace protocol_detail

/// Advances the simulation by one protocol round. Returns the metrics row for
/// the completed round, the event trace, and the servers that entered the
/// aggregation.
inline RoundResult run_round(SimState& sim, const FedProblem& problem,
                             const EngineConfig& cfg,
                             const EvalData* eval = nullptr) {
  const int t = sim.round;
  const double base = sim.sim_time;
  const int servers = problem.server_count();
  const bool sync = cfg.protocol == ProtocolKind::sync_cloud;
  const bool rigorous = cfg.protocol == ProtocolKind::async_cloud_rigorous;

  ActivationPlan plan = sample_activations(problem, cfg, sim.edge, t, sim.seed);

  // participation and round latency
  std::vector<int> selected;
  double round_latency = 0.0;
  if (sync) {
    for (int n = 0; n < servers; ++n) selected.push_back(n);
    for (double tau : plan.server_latency)
      round_latency = std::max(round_latency, tau);
  } else {
    selected = protocol_detail::fastest_servers(plan.server_latency,
                                                cfg.async_servers_per_round);
    for (int n : selected)
      round_latency =
          std::max(round_latency, plan.server_latency[static_cast<std::size_t>(n)]);
  }
  std::vector<char> participating(static_cast<std::size_t>(servers), 0);
  for (int n : selected) participating[static_cast<std::size_t>(n)] = 1;

  // a server's device phase completes this round if it participates, or
  // always under sync / the rigorous async rule
  auto phase_completes = [&](int n) {
    return sync || rigorous || participating[static_cast<std::size_t>(n)] != 0;
  };

  std::vector<RoundEvent> events;
  auto emit = [&](RoundEvent::Kind k, int actor, double at) {
    events.push_back(RoundEvent{k, actor, at});
  };

  // ---- edge phase ----
  std::vector<std::vector<std::pair<int, const ModelVec*>>> fresh_uploads(
      static_cast<std::size_t>(servers));
  switch (cfg.algorithm) {
    case AlgorithmKind::fedbcd: {
      for (int n = 0; n < servers; ++n) {
        if (!phase_completes(n)) continue;
        const ModelVec& anchor = sim.cloud.z[static_cast<std::size_t>(n)];
        for (int i : plan.active[static_cast<std::size_t>(n)]) {
          RngStream batch = substream(sim.seed, StreamTag::batch,
                                      static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(i));
          EdgeState& e = sim.edge[static_cast<std::size_t>(i)];
          e = run_epochs(e, anchor, cfg.edge, problem, i,
                         plan.epochs[static_cast<std::size_t>(i)], batch);
          e.last_active_round = t;
          sim.uploaded[static_cast<std::size_t>(i)] = e.x_curr;
        }
      }
      break;
    }
    case AlgorithmKind::fedbcd_i: {
      // offline training happens everywhere regardless of server selection
      for (int n = 0; n < servers; ++n) {
        for (int i : plan.offline[static_cast<std::size_t>(n)]) {
          RngStream batch = substream(sim.seed, StreamTag::batch,
                                      static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(i));
          EdgeState& e = sim.edge[static_cast<std::size_t>(i)];
          e = fedbcd_i_offline(e, cfg.edge, problem, i,
                               plan.epochs[static_cast<std::size_t>(i)], batch)
                  .state;
        }
      }
      for (int n = 0; n < servers; ++n) {
        if (!phase_completes(n)) continue;
        const ModelVec& anchor = sim.cloud.z[static_cast<std::size_t>(n)];
        for (int i : plan.active[static_cast<std::size_t>(n)]) {
          EdgeState& e = sim.edge[static_cast<std::size_t>(i)];
          e = fedbcd_i_adjust(e, anchor, problem.penalty(i),
                              plan.epochs[static_cast<std::size_t>(i)],
                              problem.box());
          e.last_active_round = t;
          sim.uploaded[static_cast<std::size_t>(i)] = e.x_curr;
          fresh_uploads[static_cast<std::size_t>(n)].push_back(
              {i, &sim.uploaded[static_cast<std::size_t>(i)]});
        }
      }
      break;
    }
    case AlgorithmKind::fedavg:
    case AlgorithmKind::fedprox: {
      for (int n = 0; n < servers; ++n) {
        const ModelVec& anchor = sim.cloud.z[static_cast<std::size_t>(n)];
        for (int i : plan.active[static_cast<std::size_t>(n)]) {
          RngStream batch = substream(sim.seed, StreamTag::batch,
                                      static_cast<std::uint64_t>(t),
                                      static_cast<std::uint64_t>(i));
          ModelVec local =
              cfg.algorithm == AlgorithmKind::fedavg
                  ? fedavg_local(anchor, problem.dataset(i),
                                 plan.epochs[static_cast<std::size_t>(i)],
                                 cfg.edge.step_size, cfg.edge.batch_size,
                                 cfg.edge.exact_gradient, problem.box(), batch)
                  : fedprox_local(anchor, problem.dataset(i),
                                  cfg.proximal_weight,
                                  plan.epochs[static_cast<std::size_t>(i)],
                                  cfg.edge.step_size, cfg.edge.momentum,
                                  cfg.edge.batch_size, cfg.edge.exact_gradient,
                                  problem.box(), batch);
          EdgeState& e = sim.edge[static_cast<std::size_t>(i)];
          e.x_prev = e.x_curr;
          e.x_curr = local;
          e.last_active_round = t;
          sim.uploaded[static_cast<std::size_t>(i)] = local;
          fresh_uploads[static_cast<std::size_t>(n)].push_back(
              {i, &sim.uploaded[static_cast<std::size_t>(i)]});
        }
      }
      break;
    }
  }

  // ---- events for the device phase ----
  for (int n = 0; n < servers; ++n) {
    for (int i : plan.active[static_cast<std::size_t>(n)]) {
      emit(RoundEvent::Kind::device_request, i,
           base + plan.arrival[static_cast<std::size_t>(i)]);
      if (phase_completes(n))
        emit(RoundEvent::Kind::device_upload, i,
             base + plan.device_latency[static_cast<std::size_t>(i)]);
    }
    if (phase_completes(n))
      emit(RoundEvent::Kind::server_ready, n,
           base + plan.server_latency[static_cast<std::size_t>(n)]);
  }
  emit(RoundEvent::Kind::coordinator_aggregate, -1, base + round_latency);
  emit(RoundEvent::Kind::broadcast, -1, base + round_latency);
  protocol_detail::sort_events(events);

  // pre-aggregation metrics, matching the convergence-analysis pairing of the
  // fresh edge iterates with the pre-update global mean
  MetricsRecord rec;
  {
    ModelVec z_bar = consensus_mean(sim.cloud);
    double gap_sum = 0.0;
    std::vector<ModelVec> states;
    states.reserve(sim.edge.size());
    for (const EdgeState& e : sim.edge) states.push_back(e.x_curr);
    for (int i = 0; i < problem.device_count(); ++i)
      gap_sum += stationarity_gap(problem, states[static_cast<std::size_t>(i)],
                                  z_bar, i);
    rec.stationarity_gap_mean = gap_sum / problem.device_count();
    rec.z_grad_norm_sq = z_gradient_norm_sq(problem, states, z_bar);
  }

  // ---- cloud phase ----
  switch (cfg.algorithm) {
    case AlgorithmKind::fedavg:
    case AlgorithmKind::fedprox: {
      std::vector<std::pair<ModelVec, double>> uploads;
      double total = 0.0;
      for (int n = 0; n < servers; ++n)
        for (const auto& [i, m] : fresh_uploads[static_cast<std::size_t>(n)])
          total += cfg.uniform_aggregate_weights
                       ? 1.0
                       : static_cast<double>(problem.dataset(i).size());
      for (int n = 0; n < servers; ++n)
        for (const auto& [i, m] : fresh_uploads[static_cast<std::size_t>(n)]) {
          double w = cfg.uniform_aggregate_weights
                         ? 1.0
                         : static_cast<double>(problem.dataset(i).size());
          uploads.push_back({*m, w / total});
        }
      if (!uploads.empty()) {
        ModelVec znew = fedavg_aggregate(uploads);
        for (ModelVec& zn : sim.cloud.z) zn = znew;
        sim.cloud.last_mixed = sim.cloud.z;
        // the broadcast model replaces every local model
        for (EdgeState& e : sim.edge) {
          e.x_curr = znew;
          e.x_prev = znew;
        }
      }
      break;
    }
    case AlgorithmKind::fedbcd: {
      if (sync) {
        ModelVec z = sim.cloud.z[0];
        std::vector<double> gammas;
        for (int i = 0; i < problem.device_count(); ++i)
          gammas.push_back(problem.penalty(i));
        for (int k = 0; k < cfg.cloud_epochs; ++k)
          z = sync_update(z, sim.uploaded, gammas, cfg.cloud_step);
        for (ModelVec& zn : sim.cloud.z) zn = z;
        sim.cloud.last_mixed = sim.cloud.z;
      } else {
        MixingMatrix mix = build_async_mixing(servers, selected);
        std::vector<std::vector<PenaltyTerm>> terms(
            static_cast<std::size_t>(servers));
        for (int n = 0; n < servers; ++n)
          for (int i : problem.devices_of(n))
            terms[static_cast<std::size_t>(n)].push_back(
                {&sim.uploaded[static_cast<std::size_t>(i)], problem.penalty(i)});
        IdleServerRule rule =
            rigorous ? IdleServerRule::self_update : IdleServerRule::hold;
        for (int k = 0; k < cfg.cloud_epochs; ++k)
          dgd_step(sim.cloud, mix, terms, cfg.cloud_step, participating, rule);
      }
      break;
    }
    case AlgorithmKind::fedbcd_i: {
      if (sync) {
        ModelVec z = sim.cloud.z[0];
        std::vector<ModelVec> models;
        std::vector<double> gammas;
        for (int n = 0; n < servers; ++n)
          for (const auto& [i, m] : fresh_uploads[static_cast<std::size_t>(n)]) {
            models.push_back(*m);
            gammas.push_back(problem.penalty(i));
          }
        for (int k = 0; k < cfg.cloud_epochs; ++k)
          z = sync_update(z, models, gammas, cfg.cloud_step);
        for (ModelVec& zn : sim.cloud.z) zn = z;
        sim.cloud.last_mixed = sim.cloud.z;
      } else {
        MixingMatrix mix = build_async_mixing(servers, selected);
        std::vector<std::vector<PenaltyTerm>> terms(
            static_cast<std::size_t>(servers));
        for (int n = 0; n < servers; ++n)
          for (const auto& [i, m] : fresh_uploads[static_cast<std::size_t>(n)])
            terms[static_cast<std::size_t>(n)].push_back(
                {m, problem.penalty(i)});
        IdleServerRule rule =
            rigorous ? IdleServerRule::self_update : IdleServerRule::hold;
        for (int k = 0; k < cfg.cloud_epochs; ++k)
          dgd_step(sim.cloud, mix, terms, cfg.cloud_step, participating, rule);
      }
      break;
    }
  }

  sim.sim_time += round_latency;
  sim.round += 1;

  // post-aggregation metrics
  rec.round = sim.round;
  rec.sim_time = sim.sim_time;
  rec.consensus_max = consensus_error(sim.cloud);
  {
    std::vector<ModelVec> states;
    states.reserve(sim.edge.size());
    for (const EdgeState& e : sim.edge) states.push_back(e.x_curr);
    rec.objective_value = objective_value(problem, states, sim.cloud);
    if (eval != nullptr && !eval->device_tests.empty()) {
      double acc = 0.0;
      for (int i = 0; i < problem.device_count(); ++i)
        acc += protocol_detail::accuracy_or_zero(
            states[static_cast<std::size_t>(i)],
            &eval->device_tests[static_cast<std::size_t>(i)]);
      rec.personalized_accuracy_mean = acc / problem.device_count();
    }
    if (eval != nullptr && eval->global_test.has_value())
      rec.global_accuracy = protocol_detail::accuracy_or_zero(
          consensus_mean(sim.cloud), &*eval->global_test);
  }

  RoundResult out;
  out.metrics = rec;
  out.events = std::move(events);
  out.participating_servers = std::move(selected);
  out.round_latency = round_latency;
  return out;
}

/// Metrics row describing the initial state, before any round has run.
inline MetricsRecord initial_metrics(const SimState& sim,
                                     const FedProblem& problem,
                                     const EvalData* eval = nullptr) {
  MetricsRecord rec;
  rec.round = sim.round;
  rec.sim_time = sim.sim_time;
  ModelVec z_bar = consensus_mean(sim.cloud);
  std::vector<ModelVec> states;
  states.reserve(sim.edge.size());
  for (const EdgeState& e : sim.edge) states.push_back(e.x_curr);
  double gap_sum = 0.0;
  for (int i = 0; i < problem.device_count(); ++i)
    gap_sum += stationarity_gap(problem, states[static_cast<std::size_t>(i)],
                                z_bar, i);
  rec.stationarity_gap_mean = gap_sum / problem.device_count();
  rec.z_grad_norm_sq = z_gradient_norm_sq(problem, states, z_bar);
  rec.consensus_max = consensus_error(sim.cloud);
  rec.objective_value = objective_value(problem, states, sim.cloud);
  if (eval != nullptr && !eval->device_tests.empty()) {
    double acc = 0.0;
    for (int i = 0; i < problem.device_count(); ++i)
      acc += protocol_detail::accuracy_or_zero(
          states[static_cast<std::size_t>(i)],
          &eval->device_tests[static_cast<std::size_t>(i)]);
    rec.personalized_accuracy_mean = acc / problem.device_count();
  }
  if (eval != nullptr && eval->global_test.has_value())
    rec.global_accuracy = protocol_detail::accuracy_or_zero(z_bar,
                                                            &*eval->global_test);
  return rec;
}

}  // namespace fedbcd
