#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedbcd/model.hpp"

namespace fedbcd {

/// Square nonnegative matrix realizing one round of server/server mixing.
class MixingMatrix {
 public:
  explicit MixingMatrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, 0.0) {
    if (n < 1) throw std::invalid_argument("MixingMatrix: size must be >= 1");
    for (int i = 0; i < n; ++i) at(i, i) = 1.0;
  }

  static MixingMatrix identity(int n) { return MixingMatrix(n); }

  static MixingMatrix uniform(int n) {
    MixingMatrix m(n);
    double w = 1.0 / n;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m.at(r, c) = w;
    return m;
  }

  int size() const { return n_; }
  double& at(int r, int c) { return a_[static_cast<std::size_t>(r) * n_ + c]; }
  double at(int r, int c) const {
    return a_[static_cast<std::size_t>(r) * n_ + c];
  }

  bool is_doubly_stochastic(double tol = 1e-12) const {
    for (int r = 0; r < n_; ++r) {
      double row = 0.0;
      for (int c = 0; c < n_; ++c) {
        if (at(r, c) < 0.0) return false;
        row += at(r, c);
      }
      if (std::abs(row - 1.0) > tol) return false;
    }
    for (int c = 0; c < n_; ++c) {
      double col = 0.0;
      for (int r = 0; r < n_; ++r) col += at(r, c);
      if (std::abs(col - 1.0) > tol) return false;
    }
    return true;
  }

  double min_positive_entry() const {
    double m = 1.0;
    for (double v : a_)
      if (v > 0.0 && v < m) m = v;
    return m;
  }

 private:
  int n_;
  std::vector<double> a_;
};

/// Coordinator-induced matrix: uniform 1/B block on the selected servers,
/// identity elsewhere. Doubly stochastic by construction.
inline MixingMatrix build_async_mixing(int servers,
                                       const std::vector<int>& selected) {
  if (selected.empty())
    throw std::invalid_argument("build_async_mixing: empty selection");
  MixingMatrix m(servers);
  double w = 1.0 / static_cast<double>(selected.size());
  for (int n : selected)
    if (n < 0 || n >= servers)
      throw std::invalid_argument("build_async_mixing: server index out of range");
  for (int n : selected) {
    m.at(n, n) = 0.0;
    for (int k : selected) m.at(n, k) = w;
  }
  return m;
}

/// Per-server global models. last_mixed holds the most recent pre-step
/// mixed values w_n, kept for feasibility diagnostics.
struct CloudState {
  std::vector<ModelVec> z;
  std::vector<ModelVec> last_mixed;
};

inline CloudState make_cloud_state(int servers, const ModelVec& init) {
  CloudState c;
  c.z.assign(static_cast<std::size_t>(servers), init);
  c.last_mixed = c.z;
  return c;
}

/// Arithmetic mean of the server models.
inline ModelVec consensus_mean(const CloudState& s) {
  if (s.z.empty()) throw std::invalid_argument("consensus_mean: no servers");
  ModelVec m(s.z.front().size());
  for (const ModelVec& zn : s.z) {
    require_same_dim(m, zn, "consensus_mean");
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += zn[j];
  }
  for (std::size_t j = 0; j < m.size(); ++j)
    m[j] /= static_cast<double>(s.z.size());
  return m;
}

/// Single-model aggregation step:
///   z+ = z - step * sum_i weight_i (z - model_i).
/// With step * sum(weights) <= 1 this is a convex combination of in-box
/// points, so feasibility is preserved.
inline ModelVec sync_update(const ModelVec& z, std::span<const ModelVec> models,
                            std::span<const double> weights, double step) {
  if (models.size() != weights.size())
    throw std::invalid_argument("sync_update: models/weights size mismatch");
  ModelVec g(z.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    require_same_dim(z, models[i], "sync_update");
    for (std::size_t j = 0; j < z.size(); ++j)
      g[j] += weights[i] * (z[j] - models[i][j]);
  }
  ModelVec out = z;
  for (std::size_t j = 0; j < z.size(); ++j) out[j] -= step * g[j];
  return out;
}

/// One penalty term of a server's aggregation gradient.
struct PenaltyTerm {
  const ModelVec* model;
  double weight;
};

enum class IdleServerRule { hold, self_update };

/// One mixing-plus-gradient round over all servers, Jacobi style: every w_n
/// is computed from the pre-step snapshot.
///   participating n:  w_n = sum_m a(n,m) z_m;  z_n+ = w_n - step * sum gamma (w_n - x)
///   idle n:           hold keeps z_n; self_update uses w_n = z_n and steps.
inline void dgd_step(CloudState& state, const MixingMatrix& mix,
                     const std::vector<std::vector<PenaltyTerm>>& terms,
                     double step, const std::vector<char>& participating,
                     IdleServerRule idle_rule) {
  int n = static_cast<int>(state.z.size());
  if (mix.size() != n || static_cast<int>(terms.size()) != n ||
      static_cast<int>(participating.size()) != n)
    throw std::invalid_argument("dgd_step: size mismatch");
  if (!mix.is_doubly_stochastic())
    throw std::invalid_argument("dgd_step: matrix is not doubly stochastic");

  std::size_t d = state.z.front().size();
  std::vector<ModelVec> w(static_cast<std::size_t>(n), ModelVec(d));
  for (int r = 0; r < n; ++r) {
    if (participating[static_cast<std::size_t>(r)]) {
      for (int c = 0; c < n; ++c) {
        double a = mix.at(r, c);
        if (a == 0.0) continue;
        const ModelVec& zc = state.z[static_cast<std::size_t>(c)];
        for (std::size_t j = 0; j < d; ++j)
          w[static_cast<std::size_t>(r)][j] += a * zc[j];
      }
    } else {
      w[static_cast<std::size_t>(r)] = state.z[static_cast<std::size_t>(r)];
    }
  }

  for (int r = 0; r < n; ++r) {
    bool active = participating[static_cast<std::size_t>(r)] != 0;
    if (!active && idle_rule == IdleServerRule::hold) continue;
    ModelVec& zr = state.z[static_cast<std::size_t>(r)];
    const ModelVec& wr = w[static_cast<std::size_t>(r)];
    ModelVec g(d);
    for (const PenaltyTerm& t : terms[static_cast<std::size_t>(r)]) {
      require_same_dim(*t.model, wr, "dgd_step");
      for (std::size_t j = 0; j < d; ++j)
        g[j] += t.weight * (wr[j] - (*t.model)[j]);
    }
    for (std::size_t j = 0; j < d; ++j) zr[j] = wr[j] - step * g[j];
  }
  state.last_mixed = std::move(w);
}

/// Max absolute deviation of the entries of A(t) ... A(s+1) from 1/n.
/// An empty product is the identity.
inline double mixing_product_deviation(std::span<const MixingMatrix> seq) {
  if (seq.empty())
    throw std::invalid_argument("mixing_product_deviation: empty sequence");
  int n = seq.front().size();
  MixingMatrix phi = MixingMatrix::identity(n);
  for (const MixingMatrix& a : seq) {
    if (a.size() != n)
      throw std::invalid_argument("mixing_product_deviation: size mismatch");
    // phi <- a * phi
    MixingMatrix next(n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += a.at(r, k) * phi.at(k, c);
        next.at(r, c) = s;
      }
    phi = next;
  }
  double target = 1.0 / n;
  double dev = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      dev = std::max(dev, std::abs(phi.at(r, c) - target));
  return dev;
}

/// Geometric contraction envelope for products of doubly stochastic mixing
/// matrices with entry floor c and connectivity period q:
///   |[phi(t,s)]_{n,m} - 1/n| <= theta * beta^(t-s).
struct GossipBound {
  double theta;
  double beta;
};

inline GossipBound gossip_contraction_bound(double entry_floor, int servers,
                                            int connectivity_period) {
  if (!(entry_floor > 0) || servers < 1 || connectivity_period < 1)
    throw std::invalid_argument("gossip_contraction_bound: bad arguments");
  double base = 1.0 - entry_floor / (4.0 * servers * servers);
  return GossipBound{std::pow(base, -2.0),
                     std::pow(base, 1.0 / connectivity_period)};
}

}  // namespace fedbcd
