#pragma once

#include <stdexcept>
#include <string>

#include "fedbcd/model.hpp"
#include "fedbcd/rng.hpp"

namespace fedbcd {

/// Per-device solver state. x_curr/x_prev are the last two iterates of the
/// most recent activation; both always lie inside the box.
struct EdgeState {
  ModelVec x_curr;
  ModelVec x_prev;
  int last_active_round = -1;
  int offline_rounds_since_sync = 0;
};

/// Both iterates start at the initial model, so the first extrapolation is a
/// no-op.
inline EdgeState make_edge_state(const ModelVec& init) {
  return EdgeState{init, init, -1, 0};
}

struct EdgeHyper {
  double step_size = 0.005;   // edge learning rate
  double momentum = 0.9;      // extrapolation weight, in [0, 1)
  int epochs_min = 1;
  int epochs_max = 5;
  int batch_size = 32;
  bool exact_gradient = false;
  int offline_budget = 4;     // consecutive offline rounds before suspension
};

inline void validate(const EdgeHyper& h) {
  if (!(h.step_size > 0)) throw std::invalid_argument("EdgeHyper: step_size must be > 0");
  if (h.momentum < 0 || h.momentum >= 1)
    throw std::invalid_argument("EdgeHyper: momentum must be in [0, 1)");
  if (h.epochs_min < 1 || h.epochs_min > h.epochs_max)
    throw std::invalid_argument("EdgeHyper: need 1 <= epochs_min <= epochs_max");
  if (!h.exact_gradient && h.batch_size < 1)
    throw std::invalid_argument("EdgeHyper: batch_size must be >= 1");
  if (h.offline_budget < 0)
    throw std::invalid_argument("EdgeHyper: offline_budget must be >= 0");
}

namespace edge_detail {

/// One extrapolated projected step on  loss + (penalty/2)||x - anchor||^2.
/// anchor may be null only when penalty == 0. The gradient is evaluated at
/// the extrapolated point, which is not re-projected.
inline void aspg_step(ModelVec& x_curr, ModelVec& x_prev, const ModelVec* anchor,
                      double penalty, const LocalDataset& data,
                      const EdgeHyper& h, const BoxSet& box, RngStream& rng,
                      int device) {
  std::size_t d = x_curr.size();
  ModelVec x_ex(d);
  for (std::size_t j = 0; j < d; ++j)
    x_ex[j] = x_curr[j] + h.momentum * (x_curr[j] - x_prev[j]);

  ModelVec g = h.exact_gradient ? local_grad(data, x_ex)
                                : stochastic_grad(data, x_ex, h.batch_size, rng);
  if (penalty != 0.0) {
    for (std::size_t j = 0; j < d; ++j)
      g[j] += penalty * (x_ex[j] - (*anchor)[j]);
  }
  if (!g.all_finite())
    throw std::runtime_error("device " + std::to_string(device) +
                             ": non-finite gradient");

  ModelVec x_next(d);
  for (std::size_t j = 0; j < d; ++j)
    x_next[j] = box.clamp(x_ex[j] - h.step_size * g[j]);

  x_prev = x_curr;
  x_curr = x_next;
}

}  // namespace edge_detail

/// One ASPG iteration on the penalized objective anchored at z.
inline EdgeState aspg_epoch(const EdgeState& state, const ModelVec& anchor,
                            const EdgeHyper& h, const FedProblem& p, int device,
                            RngStream& rng) {
  if (anchor.size() != p.dimension())
    throw std::invalid_argument("aspg_epoch: anchor dimension mismatch");
  EdgeState out = state;
  edge_detail::aspg_step(out.x_curr, out.x_prev, &anchor, p.penalty(device),
                         p.dataset(device), h, p.box(), rng, device);
  return out;
}

/// `epochs` ASPG iterations from the warm-started state.
inline EdgeState run_epochs(EdgeState state, const ModelVec& anchor,
                            const EdgeHyper& h, const FedProblem& p, int device,
                            int epochs, RngStream& rng) {
  for (int k = 0; k < epochs; ++k)
    state = aspg_epoch(state, anchor, h, p, device, rng);
  return state;
}

/// Epoch count drawn uniformly from [epochs_min, epochs_max] on the device's
/// own keyed stream, so other draws are unaffected.
inline int draw_epoch_count(const EdgeHyper& h, std::uint64_t seed, int round,
                            int device) {
  RngStream s = substream(seed, StreamTag::epochs,
                          static_cast<std::uint64_t>(round),
                          static_cast<std::uint64_t>(device));
  return s.uniform_int(h.epochs_min, h.epochs_max);
}

struct ActivationResult {
  EdgeState state;
  int epochs;
};

/// A full activation at `round`: draws the epoch count, runs that many ASPG
/// iterations against the received anchor, stamps the round.
inline ActivationResult run_activation(const EdgeState& state,
                                       const ModelVec& anchor,
                                       const EdgeHyper& h, const FedProblem& p,
                                       int device, int round,
                                       std::uint64_t seed) {
  int epochs = draw_epoch_count(h, seed, round, device);
  RngStream batch = substream(seed, StreamTag::batch,
                              static_cast<std::uint64_t>(round),
                              static_cast<std::uint64_t>(device));
  EdgeState out = run_epochs(state, anchor, h, p, device, epochs, batch);
  out.last_active_round = round;
  return ActivationResult{std::move(out), epochs};
}

struct OfflineResult {
  EdgeState state;
  bool suspended;
};

/// Offline phase of the split update: ASPG epochs on the local loss alone
/// (no anchor pull). A device that has exhausted its offline budget stops
/// training until the next successful sync.
inline OfflineResult fedbcd_i_offline(const EdgeState& state,
                                      const EdgeHyper& h, const FedProblem& p,
                                      int device, int epochs, RngStream& rng) {
  if (state.offline_rounds_since_sync >= h.offline_budget)
    return OfflineResult{state, true};
  EdgeState out = state;
  for (int k = 0; k < epochs; ++k)
    edge_detail::aspg_step(out.x_curr, out.x_prev, nullptr, 0.0,
                           p.dataset(device), h, p.box(), rng, device);
  out.offline_rounds_since_sync += 1;
  return OfflineResult{std::move(out), false};
}

/// Online phase of the split update: `epochs` projected pull steps
/// x <- clamp(x - pull (x - anchor)). pull must be in (0, 1] or the map
/// overshoots. Resets the offline budget counter.
inline EdgeState fedbcd_i_adjust(const EdgeState& state, const ModelVec& anchor,
                                 double pull, int epochs, const BoxSet& box) {
  if (!(pull > 0.0) || pull > 1.0)
    throw std::invalid_argument("fedbcd_i_adjust: pull weight must be in (0, 1]");
  if (anchor.size() != state.x_curr.size())
    throw std::invalid_argument("fedbcd_i_adjust: anchor dimension mismatch");
  EdgeState out = state;
  for (int k = 0; k < epochs; ++k) {
    ModelVec next(out.x_curr.size());
    for (std::size_t j = 0; j < next.size(); ++j)
      next[j] = box.clamp(out.x_curr[j] - pull * (out.x_curr[j] - anchor[j]));
    out.x_prev = out.x_curr;
    out.x_curr = next;
  }
  out.offline_rounds_since_sync = 0;
  return out;
}

}  // namespace fedbcd
