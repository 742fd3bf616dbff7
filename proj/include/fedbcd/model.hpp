#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedbcd/rng.hpp"

namespace fedbcd {

/// Flat real parameter vector; the unit of every device and server model.
class ModelVec {
 public:
  ModelVec() = default;
  explicit ModelVec(std::size_t dim, double fill = 0.0) : v_(dim, fill) {}
  explicit ModelVec(std::vector<double> values) : v_(std::move(values)) {}

  std::size_t size() const { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const ModelVec& a, const ModelVec& b) {
    return a.v_ == b.v_;
  }

 private:
  std::vector<double> v_;
};

inline void require_same_dim(const ModelVec& a, const ModelVec& b,
                             const char* where) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

inline double dot(const ModelVec& a, const ModelVec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(const ModelVec& a, const ModelVec& b) {
  require_same_dim(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double norm(const ModelVec& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

/// Elementwise box; the feasible set of every model.
struct BoxSet {
  double lower;
  double upper;

  BoxSet(double lo, double hi) : lower(lo), upper(hi) {
    if (!(lo < hi)) throw std::invalid_argument("BoxSet: lower must be < upper");
  }

  double clamp(double x) const {
    return x < lower ? lower : (x > upper ? upper : x);
  }

  bool contains(const ModelVec& v, double tol = 0.0) const {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] < lower - tol || v[i] > upper + tol) return false;
    return true;
  }
};

/// Elementwise clamp; idempotent and nonexpansive.
inline ModelVec project_box(const BoxSet& box, const ModelVec& v) {
  ModelVec out = v;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = box.clamp(out[i]);
  return out;
}

inline void project_box_in_place(const BoxSet& box, ModelVec& v) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = box.clamp(v[i]);
}

enum class LossKind { least_squares, logistic, multinomial_logistic };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::least_squares: return "least_squares";
    case LossKind::logistic: return "logistic";
    case LossKind::multinomial_logistic: return "multinomial_logistic";
  }
  return "?";
}

struct Sample {
  std::vector<double> features;
  // Regression target, a +/-1 binary label, or a class index in [0, classes).
  double label = 0.0;
};

/// A device's private training or test data with its loss definition.
class LocalDataset {
 public:
  LocalDataset(LossKind kind, std::vector<Sample> samples, int classes = 0)
      : kind_(kind), classes_(classes), samples_(std::move(samples)) {
    if (samples_.empty())
      throw std::invalid_argument("LocalDataset: empty dataset");
    std::size_t m = samples_.front().features.size();
    if (m == 0) throw std::invalid_argument("LocalDataset: empty features");
    for (const Sample& s : samples_) {
      if (s.features.size() != m)
        throw std::invalid_argument("LocalDataset: inconsistent feature dims");
      if (kind_ == LossKind::logistic && s.label != 1.0 && s.label != -1.0)
        throw std::invalid_argument("LocalDataset: logistic labels must be +/-1");
      if (kind_ == LossKind::multinomial_logistic) {
        double c = s.label;
        if (c != std::floor(c) || c < 0 || c >= classes_)
          throw std::invalid_argument(
              "LocalDataset: multinomial label outside [0, classes)");
      }
    }
    if (kind_ == LossKind::multinomial_logistic && classes_ < 2)
      throw std::invalid_argument("LocalDataset: multinomial needs classes >= 2");
  }

  LossKind loss() const { return kind_; }
  int classes() const { return classes_; }
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t feature_dim() const { return samples_.front().features.size(); }

  /// Model dimension d induced by the loss; multinomial stacks one block of
  /// weights per class, row-major.
  std::size_t model_dim() const {
    if (kind_ == LossKind::multinomial_logistic)
      return feature_dim() * static_cast<std::size_t>(classes_);
    return feature_dim();
  }

 private:
  LossKind kind_;
  int classes_;
  std::vector<Sample> samples_;
};

namespace loss_detail {

inline void require_dim(const LocalDataset& d, const ModelVec& x,
                        const char* where) {
  if (x.size() != d.model_dim())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

inline double sample_loss(const LocalDataset& d, const ModelVec& x,
                          const Sample& s) {
  switch (d.loss()) {
    case LossKind::least_squares: {
      double r = dot(ModelVec(s.features), x) - s.label;
      return 0.5 * r * r;
    }
    case LossKind::logistic: {
      // ln(1 + exp(-y a.x)), evaluated stably
      double m = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) m += s.features[j] * x[j];
      double t = -s.label * m;
      return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
    case LossKind::multinomial_logistic: {
      int c = d.classes();
      std::size_t m = d.feature_dim();
      double max_score = -1e300, score_y = 0.0;
      std::vector<double> scores(static_cast<std::size_t>(c));
      for (int k = 0; k < c; ++k) {
        double sc = 0.0;
        for (std::size_t j = 0; j < m; ++j)
          sc += x[static_cast<std::size_t>(k) * m + j] * s.features[j];
        scores[static_cast<std::size_t>(k)] = sc;
        if (sc > max_score) max_score = sc;
      }
      score_y = scores[static_cast<std::size_t>(s.label)];
      double lse = 0.0;
      for (int k = 0; k < c; ++k)
        lse += std::exp(scores[static_cast<std::size_t>(k)] - max_score);
      return max_score + std::log(lse) - score_y;
    }
  }
  return 0.0;
}

/// Adds scale * grad h(x; s) into out.
inline void accumulate_sample_grad(const LocalDataset& d, const ModelVec& x,
                                   const Sample& s, double scale,
                                   ModelVec& out) {
  switch (d.loss()) {
    case LossKind::least_squares: {
      double m = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) m += s.features[j] * x[j];
      double r = scale * (m - s.label);
      for (std::size_t j = 0; j < x.size(); ++j) out[j] += r * s.features[j];
      return;
    }
    case LossKind::logistic: {
      double m = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) m += s.features[j] * x[j];
      // -y a sigma(-y a.x)
      double t = -s.label * m;
      double sig = t > 0 ? 1.0 / (1.0 + std::exp(-t))
                         : std::exp(t) / (1.0 + std::exp(t));
      double r = -scale * s.label * sig;
      for (std::size_t j = 0; j < x.size(); ++j) out[j] += r * s.features[j];
      return;
    }
    case LossKind::multinomial_logistic: {
      int c = d.classes();
      std::size_t m = d.feature_dim();
      std::vector<double> scores(static_cast<std::size_t>(c));
      double max_score = -1e300;
      for (int k = 0; k < c; ++k) {
        double sc = 0.0;
        for (std::size_t j = 0; j < m; ++j)
          sc += x[static_cast<std::size_t>(k) * m + j] * s.features[j];
        scores[static_cast<std::size_t>(k)] = sc;
        if (sc > max_score) max_score = sc;
      }
      double lse = 0.0;
      for (int k = 0; k < c; ++k) {
        scores[static_cast<std::size_t>(k)] =
            std::exp(scores[static_cast<std::size_t>(k)] - max_score);
        lse += scores[static_cast<std::size_t>(k)];
      }
      int y = static_cast<int>(s.label);
      for (int k = 0; k < c; ++k) {
        double p = scores[static_cast<std::size_t>(k)] / lse;
        double r = scale * (p - (k == y ? 1.0 : 0.0));
        for (std::size_t j = 0; j < m; ++j)
          out[static_cast<std::size_t>(k) * m + j] += r * s.features[j];
      }
      return;
    }
  }
}

}  // namespace loss_detail

/// Mean per-sample loss g_i(x).
inline double local_loss(const LocalDataset& d, const ModelVec& x) {
  loss_detail::require_dim(d, x, "local_loss");
  double s = 0.0;
  for (const Sample& smp : d.samples()) s += loss_detail::sample_loss(d, x, smp);
  double v = s / static_cast<double>(d.size());
  if (!std::isfinite(v)) throw std::runtime_error("local_loss: non-finite value");
  return v;
}

/// Exact full-batch gradient of g_i at x.
inline ModelVec local_grad(const LocalDataset& d, const ModelVec& x) {
  loss_detail::require_dim(d, x, "local_grad");
  ModelVec g(x.size());
  double w = 1.0 / static_cast<double>(d.size());
  for (const Sample& smp : d.samples())
    loss_detail::accumulate_sample_grad(d, x, smp, w, g);
  return g;
}

/// Mini-batch gradient: mean of `batch` per-sample gradients, drawn
/// uniformly with replacement. Unbiased for local_grad.
inline ModelVec stochastic_grad(const LocalDataset& d, const ModelVec& x,
                                int batch, RngStream& rng) {
  loss_detail::require_dim(d, x, "stochastic_grad");
  if (batch <= 0) throw std::invalid_argument("stochastic_grad: batch must be >= 1");
  ModelVec g(x.size());
  double w = 1.0 / static_cast<double>(batch);
  for (int r = 0; r < batch; ++r) {
    std::size_t idx = static_cast<std::size_t>(rng.below(d.size()));
    loss_detail::accumulate_sample_grad(d, x, d.samples()[idx], w, g);
  }
  return g;
}

/// Mean squared deviation of single-sample gradients around local_grad.
/// With replacement sampling, E||stochastic - exact||^2 equals this over batch.
inline double single_sample_grad_variance(const LocalDataset& d,
                                          const ModelVec& x) {
  ModelVec mean = local_grad(d, x);
  double acc = 0.0;
  for (const Sample& smp : d.samples()) {
    ModelVec g(x.size());
    loss_detail::accumulate_sample_grad(d, x, smp, 1.0, g);
    acc += squared_distance(g, mean);
  }
  return acc / static_cast<double>(d.size());
}

/// Federated topology plus per-device data, penalty weights and the box.
class FedProblem {
 public:
  FedProblem(int servers, std::vector<int> device_server,
             std::vector<LocalDataset> data, std::vector<double> penalty,
             BoxSet box)
      : servers_(servers),
        device_server_(std::move(device_server)),
        data_(std::move(data)),
        penalty_(std::move(penalty)),
        box_(box) {
    if (servers_ < 1) throw std::invalid_argument("FedProblem: servers >= 1");
    if (data_.empty()) throw std::invalid_argument("FedProblem: no devices");
    if (device_server_.size() != data_.size() ||
        penalty_.size() != data_.size())
      throw std::invalid_argument("FedProblem: per-device array sizes differ");
    dim_ = data_.front().model_dim();
    for (const LocalDataset& d : data_)
      if (d.model_dim() != dim_)
        throw std::invalid_argument("FedProblem: inconsistent model dims");
    devices_of_.resize(static_cast<std::size_t>(servers_));
    for (std::size_t i = 0; i < device_server_.size(); ++i) {
      int n = device_server_[i];
      if (n < 0 || n >= servers_)
        throw std::invalid_argument("FedProblem: device assigned to bad server");
      devices_of_[static_cast<std::size_t>(n)].push_back(static_cast<int>(i));
    }
    for (double g : penalty_)
      if (!(g > 0.0))
        throw std::invalid_argument("FedProblem: penalty weights must be > 0");
  }

  int server_count() const { return servers_; }
  int device_count() const { return static_cast<int>(data_.size()); }
  std::size_t dimension() const { return dim_; }
  const BoxSet& box() const { return box_; }
  int server_of(int device) const {
    return device_server_[static_cast<std::size_t>(device)];
  }
  const std::vector<int>& devices_of(int server) const {
    return devices_of_[static_cast<std::size_t>(server)];
  }
  const LocalDataset& dataset(int device) const {
    return data_[static_cast<std::size_t>(device)];
  }
  double penalty(int device) const {
    return penalty_[static_cast<std::size_t>(device)];
  }

 private:
  int servers_;
  std::vector<int> device_server_;
  std::vector<LocalDataset> data_;
  std::vector<double> penalty_;
  BoxSet box_;
  std::size_t dim_ = 0;
  std::vector<std::vector<int>> devices_of_;
};

/// g_i(x) + (penalty_i / 2) ||x - z||^2.
inline double penalized_value(const FedProblem& p, const ModelVec& x,
                              const ModelVec& z, int device) {
  require_same_dim(x, z, "penalized_value");
  return local_loss(p.dataset(device), x) +
         0.5 * p.penalty(device) * squared_distance(x, z);
}

/// Gradient of the penalized objective in x: grad g_i(x) + penalty_i (x - z).
inline ModelVec penalized_grad(const FedProblem& p, const ModelVec& x,
                               const ModelVec& z, int device) {
  require_same_dim(x, z, "penalized_grad");
  ModelVec g = local_grad(p.dataset(device), x);
  double gamma = p.penalty(device);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += gamma * (x[j] - z[j]);
  return g;
}

}  // namespace fedbcd
