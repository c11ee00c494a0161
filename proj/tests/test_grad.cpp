#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mftg/grad.hpp"
#include "mftg/sim.hpp"
#include "test_support.hpp"

using namespace mftg;

namespace {

// Deterministic receding-horizon cost as a function of one player's
// stacked gain, the other player held fixed.
CostEvaluator make_evaluator(const LqMftgModel& model, const Mat& k_other,
                             const Mat& l_other, const PolicyProfile& frozen,
                             int t, const Mat& cov_y, const Mat& cov_z,
                             Player player) {
  return [=, &model, &frozen](const StackedGain& g, int) {
    const auto [k, l] = g.unstack();
    if (player == Player::kController)
      return exact_receding_cost(model, k, k_other, l, l_other, frozen, t,
                                 cov_y, cov_z)
          .total;
    return exact_receding_cost(model, k_other, k, l_other, l, frozen, t,
                               cov_y, cov_z)
        .total;
  };
}

Mat central_difference(const CostEvaluator& cost, const StackedGain& base,
                       double h) {
  Mat grad(base.value.rows(), base.value.cols());
  for (Eigen::Index c = 0; c < base.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < base.value.rows(); ++r) {
      StackedGain up = base, down = base;
      up.value(r, c) += h;
      down.value(r, c) -= h;
      grad(r, c) = (cost(up, 0) - cost(down, 0)) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace

TEST_CASE("gradients vanish at the per-timestep saddle") {
  for (std::uint64_t key : {1u, 2u, 3u}) {
    const auto model = testing::random_model(key, 2, 2, 3);
    const auto sol = solve_riccati(model);
    REQUIRE(sol.cond1_holds);
    RngStream rng(key, 0x66757aULL);
    auto frozen = sol.nash_gains;
    for (auto& k : frozen.k1) k += testing::random_matrix(2, 2, 0.05, rng);
    for (auto& l : frozen.l2) l += testing::random_matrix(2, 2, 0.05, rng);

    const int t = 1;
    // The local saddle given this (non-Nash) continuation, from the
    // one-step game formulas evaluated at the continuation matrices.
    const auto rec = compute_value_recursion(model, frozen);
    const Mat& w = rec.y_value[t + 1];
    const Mat& wbar = rec.z_value[t + 1];
    const double g2inv = 1.0 / (model.gamma * model.gamma);
    const Mat eye = Mat::Identity(2, 2);
    const Mat lam = eye + (model.b[t] * model.b[t].transpose() - g2inv * eye) * w;
    const Mat btil = model.b_tilde(t);
    const Mat lam_bar = eye + (btil * btil.transpose() - g2inv * eye) * wbar;
    const Mat core = w * lam.fullPivLu().solve(model.a[t]);
    const Mat core_bar = wbar * lam_bar.fullPivLu().solve(model.a_tilde(t));

    const auto grads = exact_gradient(
        model, model.b[t].transpose() * core, g2inv * core,
        btil.transpose() * core_bar, g2inv * core_bar, frozen, t,
        Mat::Identity(2, 2), Mat::Identity(2, 2));
    CHECK(grads.player1.norm() <= 1e-9);
    CHECK(grads.player2.norm() <= 1e-9);
  }
}

TEST_CASE("scalar gradient formula") {
  const auto model = testing::scalar_instance(10.0);
  const auto frozen = PolicyProfile::zero(model);
  const Mat zero = Mat::Zero(1, 1);
  const Mat one = Mat::Ones(1, 1);

  // dJ/dK1 = 2((1 + 1) K1 - 1) at K2 = 0, Sy = 1: zero at K1 = 0.5.
  for (double k1 : {0.0, 0.25, 0.5, 1.0}) {
    const auto grads =
        exact_gradient(model, k1 * one, zero, zero, zero, frozen, 0, one,
                       Mat::Zero(1, 1));
    CHECK(grads.player1(0, 0) ==
          doctest::Approx(2.0 * (2.0 * k1 - 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("exact gradients agree with central differences") {
  for (std::uint64_t key : {11u, 12u, 13u, 14u}) {
    const auto model = testing::random_model(key, 2, 2, 3);
    const auto sol = solve_riccati(model);
    RngStream rng(key, 0x6664ULL);
    auto frozen = sol.nash_gains;
    for (auto& k : frozen.k2) k += testing::random_matrix(2, 2, 0.1, rng);
    const int t = 0;
    const Mat cov_y = testing::random_spd(2, 0.2, rng);
    const Mat cov_z = testing::random_spd(2, 0.2, rng);

    const Mat k1 = testing::random_matrix(2, 2, 0.4, rng);
    const Mat k2 = testing::random_matrix(2, 2, 0.2, rng);
    const Mat l1 = testing::random_matrix(2, 2, 0.4, rng);
    const Mat l2 = testing::random_matrix(2, 2, 0.2, rng);

    const auto grads =
        exact_gradient(model, k1, k2, l1, l2, frozen, t, cov_y, cov_z);

    const auto eval1 =
        make_evaluator(model, k2, l2, frozen, t, cov_y, cov_z,
                       Player::kController);
    const auto eval2 =
        make_evaluator(model, k1, l1, frozen, t, cov_y, cov_z,
                       Player::kAdversary);
    const Mat fd1 = central_difference(
        eval1, StackedGain::stack(k1, l1, Player::kController), 1e-5);
    const Mat fd2 = central_difference(
        eval2, StackedGain::stack(k2, l2, Player::kAdversary), 1e-5);

    CHECK((grads.player1 - fd1).norm() / fd1.norm() <= 1e-5);
    CHECK((grads.player2 - fd2).norm() / fd2.norm() <= 1e-5);
  }
}

TEST_CASE("zero-order estimate of a constant cost centers on zero") {
  const CostEvaluator constant = [](const StackedGain&, int) { return 1.0; };
  StackedGain base;
  base.value = Mat::Zero(2, 1);
  base.player = Player::kController;
  SmoothingParams sp;
  sp.radius = 0.1;
  sp.batch = 1000000;
  RngStream rng(2024);
  const auto est = zero_order_gradient(constant, base, sp, rng);
  // Per-sample std of each component is c sqrt(n)/r; the batch mean must
  // sit within 3 standard errors of zero.
  const double se = std::sqrt(2.0) / sp.radius / std::sqrt(double(sp.batch));
  CHECK(std::abs(est.gradient.value(0, 0)) <= 3.0 * se);
  CHECK(std::abs(est.gradient.value(1, 0)) <= 3.0 * se);
  CHECK(est.mean_cost == doctest::Approx(1.0));
}

TEST_CASE("zero-order gradient of a scalar quadratic") {
  // J(k) = k^2 at k = 1; with the baseline-subtracted variant the
  // smoothed gradient of a quadratic is the true gradient.
  const CostEvaluator quadratic = [](const StackedGain& g, int) {
    const double k = g.value(0, 0);
    return k * k;
  };
  StackedGain base;
  base.value = Mat::Ones(1, 1);
  base.player = Player::kController;
  SmoothingParams sp;
  sp.radius = 1e-3;
  sp.batch = 1000000;
  sp.baseline_shift = true;
  RngStream rng(7);
  const auto est = zero_order_gradient(quadratic, base, sp, rng);
  CHECK(est.gradient.value(0, 0) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("zero-order matches the exact gradient on a receding instance") {
  const auto model = testing::scalar_instance(10.0);
  const auto frozen = PolicyProfile::zero(model);
  const Mat cov_y = Mat::Ones(1, 1);
  const Mat cov_z = Mat::Ones(1, 1);
  const Mat k1 = 0.1 * Mat::Ones(1, 1);
  const Mat k2 = Mat::Zero(1, 1);
  const Mat l1 = Mat::Zero(1, 1);
  const Mat l2 = Mat::Zero(1, 1);

  const auto exact =
      exact_gradient(model, k1, k2, l1, l2, frozen, 0, cov_y, cov_z);
  const auto eval = make_evaluator(model, k2, l2, frozen, 0, cov_y, cov_z,
                                   Player::kController);
  SmoothingParams sp;
  sp.radius = 1e-2;
  sp.batch = 100000;
  sp.baseline_shift = true;
  sp.paired_directions = true;
  RngStream rng(11);
  const auto est = zero_order_gradient(
      eval, StackedGain::stack(k1, l1, Player::kController), sp, rng);
  CHECK((est.gradient.value - exact.player1).norm() / exact.player1.norm() <=
        0.1);
}

TEST_CASE("estimator error does not grow as the radius shrinks") {
  // The receding-horizon cost is exactly quadratic in the current gains,
  // so the smoothing bias is zero at every radius; with paired directions
  // and shared unit draws the error is radius-independent up to rounding,
  // and the non-strict ordering holds deterministically.
  const auto model = testing::scalar_instance(10.0);
  const auto frozen = PolicyProfile::zero(model);
  const Mat cov_y = Mat::Ones(1, 1);
  const Mat cov_z = Mat::Ones(1, 1);
  const Mat k2 = Mat::Zero(1, 1);
  const Mat l2 = Mat::Zero(1, 1);
  const Mat k1 = 0.2 * Mat::Ones(1, 1);
  const Mat l1 = 0.1 * Mat::Ones(1, 1);
  const auto exact =
      exact_gradient(model, k1, k2, l1, l2, frozen, 0, cov_y, cov_z);
  const auto eval = make_evaluator(model, k2, l2, frozen, 0, cov_y, cov_z,
                                   Player::kController);

  double previous = -1.0;
  for (double radius : {1e-1, 1e-2, 1e-3}) {
    SmoothingParams sp;
    sp.radius = radius;
    sp.batch = 20000;
    sp.baseline_shift = true;
    sp.paired_directions = true;
    RngStream rng(99);  // common random directions across radii
    const auto est = zero_order_gradient(
        eval, StackedGain::stack(k1, l1, Player::kController), sp, rng);
    const double err = (est.gradient.value - exact.player1).norm();
    if (previous >= 0.0) CHECK(err <= previous + 1e-9);
    previous = err;
  }
}

TEST_CASE("projection basics") {
  const Mat zero = Mat::Zero(2, 2);
  CHECK(project_ball(zero, 4.0).norm() == 0.0);

  RngStream rng(5);
  Mat g = testing::random_matrix(3, 2, 1.0, rng);
  const double d = g.squaredNorm() / 4.0;  // |g|^2 = 4 D
  const Mat projected = project_ball(g, d);
  CHECK(projected.squaredNorm() == doctest::Approx(d).epsilon(1e-12));

  // Idempotent, never increases the norm, identity inside the ball.
  CHECK((project_ball(projected, d) - projected).norm() <= 1e-15);
  CHECK(project_ball(g, d).norm() <= g.norm());
  const Mat small = 0.1 * g;
  CHECK((project_ball(small, 1e6) - small).norm() == 0.0);
}

TEST_CASE("player-2 direction is ascent away from stationarity") {
  const auto model = testing::random_model(21, 2, 2, 2);
  const auto sol = solve_riccati(model);
  REQUIRE(sol.cond1_holds);
  const auto frozen = sol.nash_gains;
  const int t = 0;
  const Mat cov_y = Mat::Identity(2, 2);
  const Mat cov_z = Mat::Identity(2, 2);
  RngStream rng(23);
  const Mat k1 = sol.nash_gains.k1[t] + testing::random_matrix(2, 2, 0.2, rng);
  const Mat k2 = sol.nash_gains.k2[t] + testing::random_matrix(2, 2, 0.2, rng);
  const Mat l1 = sol.nash_gains.l1[t];
  const Mat l2 = sol.nash_gains.l2[t];

  const auto grads =
      exact_gradient(model, k1, k2, l1, l2, frozen, t, cov_y, cov_z);
  const auto [gk2, gl2] = StackedGain{grads.player2, Player::kAdversary}.unstack();

  const double before =
      exact_receding_cost(model, k1, k2, l1, l2, frozen, t, cov_y, cov_z).total;
  const double step = 1e-4;
  const double after =
      exact_receding_cost(model, k1, k2 + step * gk2, l1, l2 + step * gl2,
                          frozen, t, cov_y, cov_z)
          .total;
  CHECK(after > before);
}
