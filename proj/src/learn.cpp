#include "mftg/learn.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <memory>
#include <string>

#include "mftg/errors.hpp"

namespace mftg {

namespace {

constexpr std::uint64_t kDirectionKey = 0x64697273U;  // direction draws
constexpr std::uint64_t kEvalKey = 0x6576616cU;       // per-sample sim seeds

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Mat>(m).singularValues()(0);
}

Mat identity_if_empty(const Mat& cov, int dim) {
  if (cov.size() == 0) return Mat::Identity(dim, dim);
  if (cov.rows() != dim || cov.cols() != dim)
    throw std::invalid_argument("evaluation covariance shape mismatch");
  return cov;
}

struct LocalTargets {
  Mat k1, k2, l1, l2;
  bool valid = false;
};

// Saddle of the one-step problem defined by the continuation matrices; the
// same algebra as one Riccati step, with W in place of M.
LocalTargets local_targets(const LqMftgModel& model, int t, const Mat& w,
                           const Mat& wbar) {
  const int m = model.state_dim;
  const double g2inv = 1.0 / (model.gamma * model.gamma);
  const Mat eye = Mat::Identity(m, m);
  const Mat& a = model.a[t];
  const Mat& b = model.b[t];
  const Mat atil = model.a_tilde(t);
  const Mat btil = model.b_tilde(t);

  LocalTargets out;
  const Mat lam = eye + (b * b.transpose() - g2inv * eye) * w;
  const Mat lam_bar = eye + (btil * btil.transpose() - g2inv * eye) * wbar;
  Eigen::FullPivLU<Mat> lu(lam), lu_bar(lam_bar);
  if (!lu.isInvertible() || !lu_bar.isInvertible()) return out;
  const Mat core = w * lu.inverse() * a;
  const Mat core_bar = wbar * lu_bar.inverse() * atil;
  out.k1 = b.transpose() * core;
  out.k2 = g2inv * core;
  out.l1 = btil.transpose() * core_bar;
  out.l2 = g2inv * core_bar;
  out.valid = true;
  return out;
}

void fill_gap_columns(TraceRow& row, const RiccatiSolution* oracle, int t,
                      const Mat& k1, const Mat& k2, const Mat& l1,
                      const Mat& l2) {
  if (oracle == nullptr || oracle->aborted) return;
  row.has_gap = true;
  row.err_k = std::max(spectral_norm(k1 - oracle->nash_gains.k1[t]),
                       spectral_norm(k2 - oracle->nash_gains.k2[t]));
  row.err_l = std::max(spectral_norm(l1 - oracle->nash_gains.l1[t]),
                       spectral_norm(l2 - oracle->nash_gains.l2[t]));
}

void require_finite(const Mat& m, int t, int k, const char* what) {
  if (!m.allFinite())
    throw NumericalError(std::string("non-finite ") + what + " at t=" +
                         std::to_string(t) + ", k=" + std::to_string(k));
}

std::uint64_t sample_seed(std::uint64_t seed, int t, int k, int player,
                          int j) {
  RngStream mixer(seed, kEvalKey,
                  (static_cast<std::uint64_t>(t) << 32) |
                      static_cast<std::uint32_t>(k),
                  (static_cast<std::uint64_t>(player) << 32) |
                      static_cast<std::uint32_t>(j));
  return mixer.next();
}

}  // namespace

InnerGdaResult inner_gda(const LqMftgModel& model, int t,
                         const PolicyProfile& frozen, const RgdaConfig& cfg,
                         const RiccatiSolution* oracle) {
  if (t < 0 || t >= model.horizon)
    throw std::invalid_argument("t must be in [0, T)");
  const int m = model.state_dim;
  const int p = model.control_dim;
  const double g2 = model.gamma * model.gamma;
  const Mat cov_y = identity_if_empty(cfg.eval_cov_y, m);
  const Mat cov_z = identity_if_empty(cfg.eval_cov_z, m);
  const auto start = Clock::now();

  // The frozen continuation is fixed for the entire inner loop.
  const auto rec = compute_value_recursion(model, frozen);
  const Mat& w = rec.y_value[t + 1];
  const Mat& wbar = rec.z_value[t + 1];
  const auto targets = local_targets(model, t, w, wbar);

  const Mat& a = model.a[t];
  const Mat& b = model.b[t];
  const Mat atil = model.a_tilde(t);
  const Mat btil = model.b_tilde(t);

  InnerGdaResult res;
  res.k1 = Mat::Zero(p, m);
  res.l1 = Mat::Zero(p, m);
  res.k2 = Mat::Zero(m, m);
  res.l2 = Mat::Zero(m, m);

  auto exact_player1 = [&](const Mat& k1, const Mat& k2, const Mat& l1,
                           const Mat& l2) {
    const Mat gk1 = 2.0 *
                    ((Mat::Identity(p, p) + b.transpose() * w * b) * k1 -
                     b.transpose() * w * (a + k2)) *
                    cov_y;
    const Mat gl1 =
        2.0 *
        ((Mat::Identity(p, p) + btil.transpose() * wbar * btil) * l1 -
         btil.transpose() * wbar * (atil + l2)) *
        cov_z;
    return StackedGain::stack(gk1, gl1, Player::kController);
  };
  auto exact_player2 = [&](const Mat& k1, const Mat& k2, const Mat& l1,
                           const Mat& l2) {
    const Mat eye = Mat::Identity(m, m);
    const Mat gk2 = 2.0 * ((w - g2 * eye) * k2 + w * (a - b * k1)) * cov_y;
    const Mat gl2 =
        2.0 * ((wbar - g2 * eye) * l2 + wbar * (atil - btil * l1)) * cov_z;
    return StackedGain::stack(gk2, gl2, Player::kAdversary);
  };

  // Exact receding cost at the current gains via the frozen continuation.
  auto exact_cost = [&](const Mat& k1, const Mat& k2, const Mat& l1,
                        const Mat& l2) {
    const Mat dy = a - b * k1 + k2;
    const Mat dz = atil - btil * l1 + l2;
    const Mat wy = model.q[t] + k1.transpose() * k1 -
                   g2 * k2.transpose() * k2 + dy.transpose() * w * dy;
    const Mat wz = model.q_bar[t] + l1.transpose() * l1 -
                   g2 * l2.transpose() * l2 + dz.transpose() * wbar * dz;
    return (wy * cov_y).trace() + rec.y_offset[t] + (wz * cov_z).trace() +
           rec.z_offset[t];
  };

  const bool zero_order = cfg.gradient_mode == GradientMode::kZeroOrder;
  std::unique_ptr<RecedingEvaluator> mc_eval;
  if (zero_order)
    mc_eval = std::make_unique<RecedingEvaluator>(model, frozen, t, cov_y,
                                                  cov_z, cfg.sim);

  for (int k = 0; k < cfg.inner_iters; ++k) {
    const double eta = cfg.lr_decay ? cfg.lr / (k + 1) : cfg.lr;
    TraceRow row;
    row.t = t;
    row.k = k;

    // Gradient descent on (K1, L1), player 2 held at its current gains.
    StackedGain base1 = StackedGain::stack(res.k1, res.l1, Player::kController);
    StackedGain grad1;
    if (zero_order) {
      RngStream dir_rng(cfg.seed, kDirectionKey,
                        static_cast<std::uint64_t>(t) * 2 + 0, k);
      CostEvaluator eval = [&](const StackedGain& g, int j) {
        const auto [k1, l1] = g.unstack();
        return mc_eval
            ->evaluate(k1, res.k2, l1, res.l2, sample_seed(cfg.seed, t, k, 1, j))
            .total;
      };
      auto est = zero_order_gradient(eval, base1, cfg.smoothing, dir_rng);
      grad1 = est.gradient;
      row.cost_estimate = est.mean_cost;
    } else {
      grad1 = exact_player1(res.k1, res.k2, res.l1, res.l2);
    }
    require_finite(grad1.value, t, k, "player-1 gradient");
    Mat stacked1 = base1.value - eta * grad1.value;
    const double norm1_sq = stacked1.squaredNorm();
    stacked1 = project_ball(stacked1, cfg.proj_radius_sq);
    row.proj_active = norm1_sq > cfg.proj_radius_sq;
    res.k1 = stacked1.topRows(p);
    res.l1 = stacked1.bottomRows(p);

    // Gradient ascent on (K2, L2) against the freshly updated controller.
    StackedGain base2 = StackedGain::stack(res.k2, res.l2, Player::kAdversary);
    StackedGain grad2;
    if (zero_order) {
      RngStream dir_rng(cfg.seed, kDirectionKey,
                        static_cast<std::uint64_t>(t) * 2 + 1, k);
      CostEvaluator eval = [&](const StackedGain& g, int j) {
        const auto [k2, l2] = g.unstack();
        return mc_eval
            ->evaluate(res.k1, k2, res.l1, l2, sample_seed(cfg.seed, t, k, 2, j))
            .total;
      };
      auto est = zero_order_gradient(eval, base2, cfg.smoothing, dir_rng);
      grad2 = est.gradient;
    } else {
      grad2 = exact_player2(res.k1, res.k2, res.l1, res.l2);
    }
    require_finite(grad2.value, t, k, "player-2 gradient");
    Mat stacked2 = base2.value + eta * grad2.value;
    const double norm2_sq = stacked2.squaredNorm();
    stacked2 = project_ball(stacked2, cfg.proj_radius_sq);
    row.proj_active = row.proj_active || norm2_sq > cfg.proj_radius_sq;
    res.k2 = stacked2.topRows(m);
    res.l2 = stacked2.bottomRows(m);

    require_finite(res.k1, t, k, "gains");
    require_finite(res.k2, t, k, "gains");

    if (!zero_order)
      row.cost_estimate = exact_cost(res.k1, res.k2, res.l1, res.l2);
    row.grad_norm = std::sqrt(grad1.value.squaredNorm() +
                              grad2.value.squaredNorm());
    if (targets.valid) {
      row.target_gap = std::sqrt(
          (res.k1 - targets.k1).squaredNorm() +
          (res.k2 - targets.k2).squaredNorm() +
          (res.l1 - targets.l1).squaredNorm() +
          (res.l2 - targets.l2).squaredNorm());
    }
    fill_gap_columns(row, oracle, t, res.k1, res.k2, res.l1, res.l2);
    row.wall_ms = ms_since(start);
    res.rows.push_back(row);

    if (!zero_order && cfg.early_stop &&
        row.grad_norm < cfg.early_stop_grad_norm)
      break;
  }
  return res;
}

LearnResult rgda(const LqMftgModel& model, const RgdaConfig& cfg,
                 const RiccatiSolution* oracle) {
  LearnResult out;
  out.policy = PolicyProfile::zero(model);
  out.trace.evals_per_row =
      cfg.gradient_mode == GradientMode::kZeroOrder
          ? 2.0 * cfg.smoothing.batch * (cfg.smoothing.baseline_shift ? 2 : 1)
          : 2.0;
  double wall_offset = 0.0;
  for (int t = model.horizon - 1; t >= 0; --t) {
    auto res = inner_gda(model, t, out.policy, cfg, oracle);
    out.policy.k1[t] = res.k1;
    out.policy.k2[t] = res.k2;
    out.policy.l1[t] = res.l1;
    out.policy.l2[t] = res.l2;
    double inner_ms = res.rows.empty() ? 0.0 : res.rows.back().wall_ms;
    for (auto& row : res.rows) row.wall_ms += wall_offset;
    wall_offset += inner_ms;
    out.trace.rows.insert(out.trace.rows.end(), res.rows.begin(),
                          res.rows.end());
  }
  return out;
}

LearnResult baseline_gda(const LqMftgModel& model, const RgdaConfig& cfg,
                         const RiccatiSolution* oracle) {
  if (cfg.gradient_mode != GradientMode::kExact)
    throw std::invalid_argument("baseline_gda runs in exact mode only");
  const int T = model.horizon;
  const int m = model.state_dim;
  const int p = model.control_dim;
  const double g2 = model.gamma * model.gamma;
  const Mat cov_y0 = identity_if_empty(cfg.eval_cov_y, m);
  const Mat cov_z0 = identity_if_empty(cfg.eval_cov_z, m);
  const auto start = Clock::now();

  LearnResult out;
  out.policy = PolicyProfile::zero(model);
  out.trace.evals_per_row = 2.0 * T;
  auto& pol = out.policy;

  // State covariances under the current policy, seeded from the evaluation
  // covariances so the T=1 case matches the receding-horizon learner.
  auto propagate_covs = [&](std::vector<Mat>& covy, std::vector<Mat>& covz) {
    covy.assign(T + 1, Mat());
    covz.assign(T + 1, Mat());
    covy[0] = cov_y0;
    covz[0] = cov_z0;
    for (int s = 0; s < T; ++s) {
      const Mat dy = model.a[s] - model.b[s] * pol.k1[s] + pol.k2[s];
      const Mat dz =
          model.a_tilde(s) - model.b_tilde(s) * pol.l1[s] + pol.l2[s];
      covy[s + 1] = dy * covy[s] * dy.transpose() + model.sigma;
      covz[s + 1] = dz * covz[s] * dz.transpose() + model.sigma_bar;
    }
  };

  std::vector<Mat> covy, covz;
  for (int k = 0; k < cfg.inner_iters; ++k) {
    const double eta = cfg.lr_decay ? cfg.lr / (k + 1) : cfg.lr;
    TraceRow row;
    row.t = -1;
    row.k = k;
    double grad_sq = 0.0;

    // Descent on every timestep's (K1, L1) at once.
    auto rec = compute_value_recursion(model, pol);
    propagate_covs(covy, covz);
    std::vector<Mat> new_k1(T), new_l1(T);
    for (int t = 0; t < T; ++t) {
      const Mat& w = rec.y_value[t + 1];
      const Mat& wbar = rec.z_value[t + 1];
      const Mat& a = model.a[t];
      const Mat& b = model.b[t];
      const Mat atil = model.a_tilde(t);
      const Mat btil = model.b_tilde(t);
      const Mat gk1 = 2.0 *
                      ((Mat::Identity(p, p) + b.transpose() * w * b) *
                           pol.k1[t] -
                       b.transpose() * w * (a + pol.k2[t])) *
                      covy[t];
      const Mat gl1 =
          2.0 *
          ((Mat::Identity(p, p) + btil.transpose() * wbar * btil) *
               pol.l1[t] -
           btil.transpose() * wbar * (atil + pol.l2[t])) *
          covz[t];
      grad_sq += gk1.squaredNorm() + gl1.squaredNorm();
      Mat stacked = StackedGain::stack(pol.k1[t], pol.l1[t],
                                       Player::kController)
                        .value -
                    eta * StackedGain::stack(gk1, gl1, Player::kController)
                              .value;
      row.proj_active =
          row.proj_active || stacked.squaredNorm() > cfg.proj_radius_sq;
      stacked = project_ball(stacked, cfg.proj_radius_sq);
      new_k1[t] = stacked.topRows(p);
      new_l1[t] = stacked.bottomRows(p);
    }
    pol.k1 = new_k1;
    pol.l1 = new_l1;

    // Ascent on every (K2, L2) against the updated controller.
    rec = compute_value_recursion(model, pol);
    propagate_covs(covy, covz);
    std::vector<Mat> new_k2(T), new_l2(T);
    for (int t = 0; t < T; ++t) {
      const Mat& w = rec.y_value[t + 1];
      const Mat& wbar = rec.z_value[t + 1];
      const Mat eye = Mat::Identity(m, m);
      const Mat gk2 =
          2.0 *
          ((w - g2 * eye) * pol.k2[t] +
           w * (model.a[t] - model.b[t] * pol.k1[t])) *
          covy[t];
      const Mat gl2 =
          2.0 *
          ((wbar - g2 * eye) * pol.l2[t] +
           wbar * (model.a_tilde(t) - model.b_tilde(t) * pol.l1[t])) *
          covz[t];
      grad_sq += gk2.squaredNorm() + gl2.squaredNorm();
      Mat stacked =
          StackedGain::stack(pol.k2[t], pol.l2[t], Player::kAdversary).value +
          eta * StackedGain::stack(gk2, gl2, Player::kAdversary).value;
      row.proj_active =
          row.proj_active || stacked.squaredNorm() > cfg.proj_radius_sq;
      stacked = project_ball(stacked, cfg.proj_radius_sq);
      new_k2[t] = stacked.topRows(m);
      new_l2[t] = stacked.bottomRows(m);
    }
    pol.k2 = new_k2;
    pol.l2 = new_l2;

    for (int t = 0; t < T; ++t) {
      require_finite(pol.k1[t], t, k, "gains");
      require_finite(pol.k2[t], t, k, "gains");
    }

    row.cost_estimate =
        closed_form_cost(model, pol, cov_y0, cov_z0, 0).total;
    row.grad_norm = std::sqrt(grad_sq);
    if (oracle != nullptr && !oracle->aborted) {
      const auto gap = nash_gap(pol, *oracle);
      row.has_gap = true;
      row.err_k = gap.max_err_k;
      row.err_l = gap.max_err_l;
    }
    row.wall_ms = ms_since(start);
    out.trace.rows.push_back(row);
  }
  return out;
}

NashGapReport nash_gap(const PolicyProfile& policy,
                       const RiccatiSolution& oracle) {
  const std::size_t T = policy.k1.size();
  if (oracle.nash_gains.k1.size() != T)
    throw std::invalid_argument("policy and oracle horizons differ");
  NashGapReport report;
  report.err_k.resize(T);
  report.err_l.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    report.err_k[t] =
        std::max(spectral_norm(policy.k1[t] - oracle.nash_gains.k1[t]),
                 spectral_norm(policy.k2[t] - oracle.nash_gains.k2[t]));
    report.err_l[t] =
        std::max(spectral_norm(policy.l1[t] - oracle.nash_gains.l1[t]),
                 spectral_norm(policy.l2[t] - oracle.nash_gains.l2[t]));
    report.max_err_k = std::max(report.max_err_k, report.err_k[t]);
    report.max_err_l = std::max(report.max_err_l, report.err_l[t]);
  }
  return report;
}

double default_projection_radius_sq(const RiccatiSolution& oracle,
                                    double fallback) {
  if (oracle.aborted) return fallback;
  double max_sq = 0.0;
  const auto& g = oracle.nash_gains;
  for (std::size_t t = 0; t < g.k1.size(); ++t) {
    max_sq = std::max(
        max_sq, StackedGain::stack(g.k1[t], g.l1[t], Player::kController)
                    .value.squaredNorm());
    max_sq = std::max(
        max_sq, StackedGain::stack(g.k2[t], g.l2[t], Player::kAdversary)
                    .value.squaredNorm());
  }
  return max_sq > 0.0 ? 4.0 * max_sq : fallback;
}

}  // namespace mftg
