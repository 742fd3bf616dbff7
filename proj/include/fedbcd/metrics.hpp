#pragma once

#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>

#include "fedbcd/cloud.hpp"
#include "fedbcd/model.hpp"

namespace fedbcd {

/// Per-round convergence and accuracy quantities.
struct MetricsRecord {
  int round = 0;
  double sim_time = 0.0;
  double stationarity_gap_mean = 0.0;
  double z_grad_norm_sq = 0.0;
  double consensus_max = 0.0;
  double objective_value = 0.0;
  double global_accuracy = 0.0;
  double personalized_accuracy_mean = 0.0;
};

inline std::string metrics_csv_header() {
  return "round,sim_time,stationarity_gap_mean,z_grad_norm_sq,consensus_max,"
         "objective_value,global_accuracy,personalized_accuracy_mean";
}

inline std::string to_csv_row(const MetricsRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.round,
                r.sim_time, r.stationarity_gap_mean, r.z_grad_norm_sq,
                r.consensus_max, r.objective_value, r.global_accuracy,
                r.personalized_accuracy_mean);
  return std::string(buf);
}

/// Negated minimum of the linearized penalized objective over the box:
///   gap = -min_{v in X} <grad f_i(x, z_bar), v - x> >= 0,
/// solved coordinatewise in closed form. Zero exactly at constrained
/// stationary points.
inline double stationarity_gap(const FedProblem& p, const ModelVec& x,
                               const ModelVec& z_bar, int device) {
  ModelVec g = penalized_grad(p, x, z_bar, device);
  const BoxSet& box = p.box();
  double gap = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    double v = g[j] > 0 ? box.lower : box.upper;
    gap -= g[j] * (v - x[j]);
  }
  return gap;
}

/// Squared norm of the aggregate penalty gradient at z_bar:
///   || sum_i gamma_i (z_bar - x_i) ||^2.
inline double z_gradient_norm_sq(const FedProblem& p,
                                 std::span<const ModelVec> x_all,
                                 const ModelVec& z_bar) {
  if (static_cast<int>(x_all.size()) != p.device_count())
    throw std::invalid_argument("z_gradient_norm_sq: device count mismatch");
  ModelVec g(z_bar.size());
  for (int i = 0; i < p.device_count(); ++i) {
    const ModelVec& xi = x_all[static_cast<std::size_t>(i)];
    require_same_dim(xi, z_bar, "z_gradient_norm_sq");
    double gamma = p.penalty(i);
    for (std::size_t j = 0; j < g.size(); ++j)
      g[j] += gamma * (z_bar[j] - xi[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) s += g[j] * g[j];
  return s;
}

/// max_n || z_bar - z_n ||.
inline double consensus_error(const CloudState& c) {
  ModelVec mean = consensus_mean(c);
  double worst = 0.0;
  for (const ModelVec& zn : c.z)
    worst = std::max(worst, std::sqrt(squared_distance(mean, zn)));
  return worst;
}

/// Fraction of the test set classified correctly under the argmax (or sign)
/// decision rule. Classification losses only.
inline double evaluate_accuracy(const ModelVec& model, const LocalDataset& d) {
  if (d.loss() == LossKind::least_squares)
    throw std::invalid_argument("evaluate_accuracy: not a classification loss");
  loss_detail::require_dim(d, model, "evaluate_accuracy");
  std::size_t correct = 0;
  if (d.loss() == LossKind::logistic) {
    for (const Sample& s : d.samples()) {
      double m = 0.0;
      for (std::size_t j = 0; j < model.size(); ++j) m += s.features[j] * model[j];
      double pred = m >= 0 ? 1.0 : -1.0;
      if (pred == s.label) ++correct;
    }
  } else {
    int c = d.classes();
    std::size_t m = d.feature_dim();
    for (const Sample& s : d.samples()) {
      int best = 0;
      double best_score = -1e300;
      for (int k = 0; k < c; ++k) {
        double sc = 0.0;
        for (std::size_t j = 0; j < m; ++j)
          sc += model[static_cast<std::size_t>(k) * m + j] * s.features[j];
        if (sc > best_score) {  // ties resolve to the lowest class index
          best_score = sc;
          best = k;
        }
      }
      if (best == static_cast<int>(s.label)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

/// Full penalized objective: sum_i g_i(x_i) + (gamma_i/2)||x_i - z_{n(i)}||^2.
inline double objective_value(const FedProblem& p,
                              std::span<const ModelVec> x_all,
                              const CloudState& cloud) {
  if (static_cast<int>(x_all.size()) != p.device_count())
    throw std::invalid_argument("objective_value: device count mismatch");
  double total = 0.0;
  for (int i = 0; i < p.device_count(); ++i)
    total += penalized_value(p, x_all[static_cast<std::size_t>(i)],
                             cloud.z[static_cast<std::size_t>(p.server_of(i))], i);
  return total;
}

}  // namespace fedbcd
