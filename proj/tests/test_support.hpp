#pragma once

// Shared test helpers. Oracles here are written independently of the library
// code paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include "fedbcd/cloud.hpp"
#include "fedbcd/model.hpp"
#include "fedbcd/rng.hpp"

namespace testsupport {

using fedbcd::LocalDataset;
using fedbcd::LossKind;
using fedbcd::ModelVec;
using fedbcd::RngStream;
using fedbcd::Sample;

/// Central finite differences of a scalar function, h = 1e-5.
inline ModelVec finite_difference_grad(
    const std::function<double(const ModelVec&)>& f, const ModelVec& x,
    double h = 1e-5) {
  ModelVec g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    ModelVec hi = x, lo = x;
    hi[j] += h;
    lo[j] -= h;
    g[j] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

inline Sample make_sample(std::vector<double> features, double label) {
  return Sample{std::move(features), label};
}

/// Random dataset of the given kind; labels valid for the loss.
inline LocalDataset random_dataset(LossKind kind, int features, int count,
                                   RngStream& rng, int classes = 3) {
  std::vector<Sample> samples;
  for (int i = 0; i < count; ++i) {
    std::vector<double> f(static_cast<std::size_t>(features));
    for (double& v : f) v = rng.uniform(-2.0, 2.0);
    double label = 0.0;
    switch (kind) {
      case LossKind::least_squares: label = rng.uniform(-2.0, 2.0); break;
      case LossKind::logistic: label = rng.uniform01() < 0.5 ? -1.0 : 1.0; break;
      case LossKind::multinomial_logistic:
        label = static_cast<double>(rng.uniform_int(0, classes - 1));
        break;
    }
    samples.push_back(Sample{std::move(f), label});
  }
  return LocalDataset(kind, std::move(samples),
                      kind == LossKind::multinomial_logistic ? classes : 0);
}

inline ModelVec random_model(std::size_t dim, RngStream& rng, double lo = -2.0,
                             double hi = 2.0) {
  ModelVec x(dim);
  for (std::size_t j = 0; j < dim; ++j) x[j] = rng.uniform(lo, hi);
  return x;
}

/// Largest eigenvalue of the empirical feature second-moment matrix,
/// by power iteration. Used as a smoothness oracle for least-squares data.
inline double feature_gram_lmax(const LocalDataset& d, int iters = 200) {
  std::size_t m = d.feature_dim();
  std::vector<double> v(m, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
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
  return lambda;
}

/// Smallest window length q such that, over every window of q consecutive
/// rounds, the union of complete graphs on the selected server sets connects
/// all servers. Returns -1 if no q <= limit works.
inline int measured_connectivity_period(
    const std::vector<std::vector<int>>& selections, int servers, int limit) {
  auto window_connected = [&](std::size_t start, int q) {
    std::vector<int> parent(static_cast<std::size_t>(servers));
    for (int i = 0; i < servers; ++i) parent[static_cast<std::size_t>(i)] = i;
    std::function<int(int)> find = [&](int a) {
      while (parent[static_cast<std::size_t>(a)] != a) {
        parent[static_cast<std::size_t>(a)] =
            parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
        a = parent[static_cast<std::size_t>(a)];
      }
      return a;
    };
    for (std::size_t t = start;
         t < start + static_cast<std::size_t>(q) && t < selections.size(); ++t) {
      const std::vector<int>& sel = selections[t];
      for (std::size_t i = 1; i < sel.size(); ++i) {
        int ra = find(sel[0]), rb = find(sel[i]);
        if (ra != rb) parent[static_cast<std::size_t>(ra)] = rb;
      }
    }
    int root = find(0);
    for (int i = 1; i < servers; ++i)
      if (find(i) != root) return false;
    return true;
  };
  for (int q = 1; q <= limit; ++q) {
    bool ok = true;
    for (std::size_t start = 0; start + static_cast<std::size_t>(q) <= selections.size();
         ++start) {
      if (!window_connected(start, q)) {
        ok = false;
        break;
      }
    }
    if (ok) return q;
  }
  return -1;
}

}  // namespace testsupport
