#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fedbcd/edge.hpp"
#include "test_support.hpp"

using namespace fedbcd;
using testsupport::feature_gram_lmax;
using testsupport::make_sample;
using testsupport::random_dataset;
using testsupport::random_model;

namespace {

// g(x) = 0.5 x^2 in one dimension
FedProblem scalar_quadratic(double gamma = 1.0, double lo = -2, double hi = 2) {
  LocalDataset d(LossKind::least_squares, {make_sample({1.0}, 0.0)});
  return FedProblem(1, {0}, {d}, {gamma}, BoxSet(lo, hi));
}

EdgeHyper exact_hyper(double step, double momentum = 0.0) {
  EdgeHyper h;
  h.step_size = step;
  h.momentum = momentum;
  h.exact_gradient = true;
  return h;
}

}  // namespace

TEST_CASE("aspg_epoch hand evaluation") {
  FedProblem p = scalar_quadratic();
  EdgeState s = make_edge_state(ModelVec(1, 1.0));
  RngStream rng(1);
  // x - eta (grad g + gamma (x - 0)) = 1 - 0.5 * 2 = 0
  EdgeState next = aspg_epoch(s, ModelVec(1, 0.0), exact_hyper(0.5), p, 0, rng);
  REQUIRE(next.x_curr[0] == 0.0);
  REQUIRE(next.x_prev[0] == 1.0);
}

TEST_CASE("aspg_epoch fixes the interior minimizer") {
  // f(x) = 0.5 (x-2)^2 + 0.5 x^2, minimized at x = 1 inside the box
  LocalDataset d(LossKind::least_squares, {make_sample({1.0}, 2.0)});
  FedProblem p(1, {0}, {d}, {1.0}, BoxSet(-4, 4));
  EdgeState s = make_edge_state(ModelVec(1, 1.0));
  RngStream rng(1);
  EdgeState next = aspg_epoch(s, ModelVec(1, 0.0), exact_hyper(0.3), p, 0, rng);
  REQUIRE(next.x_curr[0] == 1.0);
}

TEST_CASE("momentum is inert when the last two iterates agree") {
  FedProblem p = scalar_quadratic();
  EdgeState s = make_edge_state(ModelVec(1, 0.7));
  ModelVec anchor(1, 0.2);
  RngStream rng_a(3), rng_b(3);
  EdgeState with = aspg_epoch(s, anchor, exact_hyper(0.1, 0.9), p, 0, rng_a);
  EdgeState without = aspg_epoch(s, anchor, exact_hyper(0.1, 0.0), p, 0, rng_b);
  REQUIRE(with.x_curr == without.x_curr);
}

TEST_CASE("run_activation with a degenerate epoch range is one epoch") {
  FedProblem p = scalar_quadratic();
  EdgeHyper h = exact_hyper(0.25);
  h.epochs_min = h.epochs_max = 1;
  EdgeState s = make_edge_state(ModelVec(1, 1.5));
  ModelVec anchor(1, 0.0);

  ActivationResult res = run_activation(s, anchor, h, p, 0, 4, 99);
  REQUIRE(res.epochs == 1);

  RngStream batch = substream(99, StreamTag::batch, 4, 0);
  EdgeState manual = aspg_epoch(s, anchor, h, p, 0, batch);
  REQUIRE(res.state.x_curr == manual.x_curr);
  REQUIRE(res.state.last_active_round == 4);
}

TEST_CASE("fresh state starts both iterates at the initialization") {
  ModelVec init(3, 0.4);
  EdgeState s = make_edge_state(init);
  REQUIRE(s.x_curr == init);
  REQUIRE(s.x_prev == init);
  REQUIRE(s.last_active_round == -1);
}

TEST_CASE("zero epochs is the identity") {
  FedProblem p = scalar_quadratic();
  EdgeState s = make_edge_state(ModelVec(1, 0.9));
  RngStream rng(8);
  EdgeState out = run_epochs(s, ModelVec(1, 0.0), exact_hyper(0.3), p, 0, 0, rng);
  REQUIRE(out.x_curr == s.x_curr);
  REQUIRE(out.x_prev == s.x_prev);
}

TEST_CASE("descent is monotone on quadratics within the step bound") {
  RngStream rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    LocalDataset d =
        random_dataset(LossKind::least_squares, 2, rng.uniform_int(3, 8), rng);
    double gamma = rng.uniform(0.2, 2.0);
    FedProblem p(1, {0}, {d}, {gamma}, BoxSet(-2, 2));
    double lips = feature_gram_lmax(d) + gamma;
    EdgeHyper h = exact_hyper(1.0 / lips);
    ModelVec z = random_model(2, rng);
    EdgeState s = make_edge_state(random_model(2, rng));
    double prev = penalized_value(p, s.x_curr, z, 0);
    for (int k = 0; k < 50; ++k) {
      RngStream unused(0);
      s = aspg_epoch(s, z, h, p, 0, unused);
      double cur = penalized_value(p, s.x_curr, z, 0);
      REQUIRE(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("offline update ignores the global model") {
  LocalDataset d(LossKind::least_squares, {make_sample({1.0}, 3.0)});
  FedProblem p(1, {0}, {d}, {1.0}, BoxSet(-2, 2));
  EdgeHyper h = exact_hyper(0.5);
  h.offline_budget = 1000;
  EdgeState s = make_edge_state(ModelVec(1, 0.0));
  RngStream rng(1);
  OfflineResult res = fedbcd_i_offline(s, h, p, 0, 1, rng);
  REQUIRE_FALSE(res.suspended);
  // plain projected gradient step on g alone: x - eta (x - 3)
  REQUIRE(res.state.x_curr[0] == Catch::Approx(1.5));
  REQUIRE(res.state.offline_rounds_since_sync == 1);
}

TEST_CASE("offline training converges to the local minimizer projected") {
  LocalDataset d(LossKind::least_squares, {make_sample({1.0}, 3.0)});
  FedProblem p(1, {0}, {d}, {1.0}, BoxSet(-2, 2));
  EdgeHyper h = exact_hyper(0.5);
  h.offline_budget = 1000;
  EdgeState s = make_edge_state(ModelVec(1, 0.0));
  RngStream rng(1);
  for (int t = 0; t < 60; ++t) s = fedbcd_i_offline(s, h, p, 0, 1, rng).state;
  REQUIRE(s.x_curr[0] == Catch::Approx(2.0).margin(1e-9));  // clamp(3)
}

TEST_CASE("offline budget suspends the fifth consecutive call") {
  FedProblem p = scalar_quadratic();
  EdgeHyper h = exact_hyper(0.1);
  h.offline_budget = 4;
  EdgeState s = make_edge_state(ModelVec(1, 1.0));
  RngStream rng(1);
  for (int call = 0; call < 4; ++call) {
    OfflineResult r = fedbcd_i_offline(s, h, p, 0, 1, rng);
    REQUIRE_FALSE(r.suspended);
    s = r.state;
  }
  REQUIRE(s.offline_rounds_since_sync == 4);
  OfflineResult fifth = fedbcd_i_offline(s, h, p, 0, 1, rng);
  REQUIRE(fifth.suspended);
  REQUIRE(fifth.state.x_curr == s.x_curr);
  REQUIRE(fifth.state.offline_rounds_since_sync == 4);
}

TEST_CASE("adjust pulls toward the anchor") {
  BoxSet box(-4, 4);
  ModelVec z(1, 0.0);
  EdgeState s = make_edge_state(ModelVec(1, 1.0));
  s.offline_rounds_since_sync = 3;

  EdgeState one = fedbcd_i_adjust(s, z, 0.2, 1, box);
  REQUIRE(one.x_curr[0] == Catch::Approx(0.8));
  REQUIRE(one.offline_rounds_since_sync == 0);

  EdgeState full = fedbcd_i_adjust(s, z, 1.0, 1, box);
  REQUIRE(full.x_curr[0] == 0.0);

  EdgeState same = fedbcd_i_adjust(make_edge_state(z), z, 0.5, 3, box);
  REQUIRE(same.x_curr == z);

  // interior iterates follow the closed form z + (1-pull)^k (x - z)
  EdgeState three = fedbcd_i_adjust(s, z, 0.2, 3, box);
  REQUIRE(three.x_curr[0] == Catch::Approx(std::pow(0.8, 3)));

  REQUIRE_THROWS_AS(fedbcd_i_adjust(s, z, 1.5, 1, box), std::invalid_argument);
  REQUIRE_THROWS_AS(fedbcd_i_adjust(s, z, 0.0, 1, box), std::invalid_argument);
}

TEST_CASE("edge updates stay feasible") {
  RngStream rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    LossKind kind = trial % 2 ? LossKind::least_squares : LossKind::logistic;
    LocalDataset d = random_dataset(kind, 2, 6, rng);
    FedProblem p(1, {0}, {d}, {rng.uniform(0.1, 2.0)}, BoxSet(-1, 1));
    EdgeHyper h;
    h.step_size = rng.uniform(0.01, 1.0);
    h.momentum = rng.uniform(0.0, 0.95);
    h.batch_size = 2;
    EdgeState s = make_edge_state(random_model(2, rng, -1.0, 1.0));
    ModelVec z = random_model(2, rng, -1.0, 1.0);
    RngStream batect(trial);
    for (int k = 0; k < 10; ++k) {
      s = aspg_epoch(s, z, h, p, 0, batect);
      REQUIRE(p.box().contains(s.x_curr));
    }
  }
}

TEST_CASE("identical inputs give bitwise identical updates") {
  RngStream rng(29);
  LocalDataset d = random_dataset(LossKind::multinomial_logistic, 3, 10, rng);
  FedProblem p(1, {0}, {d}, {0.7}, BoxSet(-2, 2));
  EdgeHyper h;
  h.batch_size = 4;
  EdgeState s = make_edge_state(random_model(d.model_dim(), rng));
  ModelVec z = random_model(d.model_dim(), rng);

  ActivationResult a = run_activation(s, z, h, p, 0, 12, 555);
  ActivationResult b = run_activation(s, z, h, p, 0, 12, 555);
  REQUIRE(a.epochs == b.epochs);
  REQUIRE(a.state.x_curr == b.state.x_curr);
  REQUIRE(a.state.x_prev == b.state.x_prev);
}

TEST_CASE("hyperparameter validation") {
  EdgeHyper h;
  validate(h);
  h.momentum = 1.0;
  REQUIRE_THROWS_AS(validate(h), std::invalid_argument);
  h.momentum = 0.5;
  h.epochs_min = 3;
  h.epochs_max = 2;
  REQUIRE_THROWS_AS(validate(h), std::invalid_argument);
}
