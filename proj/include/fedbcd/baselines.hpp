#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "fedbcd/edge.hpp"
#include "fedbcd/model.hpp"

namespace fedbcd {

/// Reference local update: `epochs` iterations of projected SGD on the local
/// loss alone, started from the received global model.
inline ModelVec fedavg_local(const ModelVec& global, const LocalDataset& data,
                             int epochs, double step, int batch,
                             bool exact_gradient, const BoxSet& box,
                             RngStream& rng) {
  EdgeHyper h;
  h.step_size = step;
  h.momentum = 0.0;
  h.batch_size = batch;
  h.exact_gradient = exact_gradient;
  ModelVec x = global;
  ModelVec x_prev = global;
  for (int k = 0; k < epochs; ++k)
    edge_detail::aspg_step(x, x_prev, nullptr, 0.0, data, h, box, rng, -1);
  return x;
}

/// Weighted aggregation of uploaded models; weights must be nonnegative and
/// sum to 1.
inline ModelVec fedavg_aggregate(
    const std::vector<std::pair<ModelVec, double>>& uploads) {
  if (uploads.empty())
    throw std::invalid_argument("fedavg_aggregate: no uploads");
  double total = 0.0;
  for (const auto& [m, w] : uploads) {
    if (w < 0) throw std::invalid_argument("fedavg_aggregate: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("fedavg_aggregate: weights must sum to 1");
  ModelVec out(uploads.front().first.size());
  for (const auto& [m, w] : uploads) {
    require_same_dim(out, m, "fedavg_aggregate");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * m[j];
  }
  return out;
}

/// Proximal local update: ASPG epochs on  g(x) + (proximal/2)||x - global||^2
/// with the anchor fixed at the received model. With proximal equal to a
/// device's penalty weight this reproduces the main edge step exactly.
inline ModelVec fedprox_local(const ModelVec& global, const LocalDataset& data,
                              double proximal, int epochs, double step,
                              double momentum, int batch, bool exact_gradient,
                              const BoxSet& box, RngStream& rng) {
  if (!(proximal > 0))
    throw std::invalid_argument("fedprox_local: proximal weight must be > 0");
  EdgeHyper h;
  h.step_size = step;
  h.momentum = momentum;
  h.batch_size = batch;
  h.exact_gradient = exact_gradient;
  ModelVec x = global;
  ModelVec x_prev = global;
  for (int k = 0; k < epochs; ++k)
    edge_detail::aspg_step(x, x_prev, &global, proximal, data, h, box, rng, -1);
  return x;
}

}  // namespace fedbcd
