#include "mftg/riccati.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mftg/errors.hpp"

namespace mftg {

namespace {

constexpr double kCondLimit = 1e12;
constexpr double kStrictTol = 1e-10;

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

// Dense inverse with an SVD condition check; m is small, robustness over
// speed.
bool invert_checked(const Mat& m, Mat& inv) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > kCondLimit) return false;
  inv = svd.solve(Mat::Identity(m.rows(), m.cols()));
  return true;
}

double min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrize(m),
                                         Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace

RiccatiSolution solve_riccati(const LqMftgModel& model) {
  const int T = model.horizon;
  const int m = model.state_dim;
  const double g2 = model.gamma * model.gamma;
  const double g2inv = 1.0 / g2;
  const Mat eye = Mat::Identity(m, m);

  RiccatiSolution sol;
  sol.m_seq.assign(T + 1, Mat());
  sol.m_bar_seq.assign(T + 1, Mat());
  sol.lambda_seq.assign(T, Mat());
  sol.lambda_bar_seq.assign(T, Mat());
  sol.n_seq.assign(T + 1, 0.0);
  sol.n_bar_seq.assign(T + 1, 0.0);
  sol.nash_gains = PolicyProfile::zero(model);
  sol.cond1_holds = true;

  sol.m_seq[T] = model.q[T];
  sol.m_bar_seq[T] = model.q_bar[T];

  auto fail_at = [&](int t) {
    sol.cond1_holds = false;
    if (sol.failure_time < 0 || t < sol.failure_time) sol.failure_time = t;
  };

  auto check_cond1 = [&](int t) {
    if (min_eig(g2 * eye - sol.m_seq[t]) <= kStrictTol) fail_at(t);
    if (min_eig(g2 * eye - sol.m_bar_seq[t]) <= kStrictTol) fail_at(t);
  };
  check_cond1(T);

  for (int t = T - 1; t >= 0; --t) {
    const Mat& mn = sol.m_seq[t + 1];
    const Mat& mbn = sol.m_bar_seq[t + 1];
    const Mat bt = model.b[t];
    const Mat at = model.a[t];
    const Mat atil = model.a_tilde(t);
    const Mat btil = model.b_tilde(t);

    sol.lambda_seq[t] = eye + (bt * bt.transpose() - g2inv * eye) * mn;
    sol.lambda_bar_seq[t] =
        eye + (btil * btil.transpose() - g2inv * eye) * mbn;

    Mat lam_inv, lam_bar_inv;
    if (!invert_checked(sol.lambda_seq[t], lam_inv) ||
        !invert_checked(sol.lambda_bar_seq[t], lam_bar_inv)) {
      fail_at(t);
      sol.aborted = true;
      return sol;
    }

    const Mat gain_core = mn * lam_inv * at;         // shared by K1*, K2*
    const Mat gain_core_bar = mbn * lam_bar_inv * atil;
    sol.nash_gains.k1[t] = bt.transpose() * gain_core;
    sol.nash_gains.k2[t] = g2inv * gain_core;
    sol.nash_gains.l1[t] = btil.transpose() * gain_core_bar;
    sol.nash_gains.l2[t] = g2inv * gain_core_bar;

    sol.m_seq[t] = symmetrize(model.q[t] + at.transpose() * gain_core);
    sol.m_bar_seq[t] =
        symmetrize(model.q_bar[t] + atil.transpose() * gain_core_bar);

    sol.n_seq[t] = sol.n_seq[t + 1] + (mn * model.sigma).trace();
    sol.n_bar_seq[t] = sol.n_bar_seq[t + 1] + (mbn * model.sigma_bar).trace();

    check_cond1(t);
  }

  sol.nash_value = (sol.m_seq[0] * model.sigma0).trace() +
                   (sol.m_bar_seq[0] * model.sigma0_bar).trace() +
                   sol.n_seq[0] + sol.n_bar_seq[0];
  return sol;
}

namespace {

double viability_scalar(const LqMftgModel& model, const RiccatiSolution& sol) {
  if (sol.aborted) return std::numeric_limits<double>::infinity();
  const double g2 = model.gamma * model.gamma;
  const Mat eye = Mat::Identity(model.state_dim, model.state_dim);
  double s = 0.0;
  for (int t = 1; t <= model.horizon; ++t) {
    s += ((sol.m_seq[t] - g2 * eye) * model.sigma).trace();
    s += ((sol.m_bar_seq[t] - g2 * eye) * model.sigma_bar).trace();
  }
  s += (sol.m_seq[0] * model.sigma0).trace();
  s += (sol.m_bar_seq[0] * model.sigma0_bar).trace();
  return s;
}

}  // namespace

Viability check_viability_mf(const LqMftgModel& model,
                             const RiccatiSolution& sol) {
  const double s = viability_scalar(model, sol);
  return {sol.cond1_holds && s <= 0.0, s};
}

Viability check_viability_finite(const LqMftgModel& model,
                                 const RiccatiSolution& sol,
                                 const PopulationGapAnalysis& gap,
                                 int n_agents) {
  if (n_agents < 1) throw std::invalid_argument("n_agents must be >= 1");
  const double s = viability_scalar(model, sol);
  const double correction = gap.c1 * gap.sigma_f *
                            static_cast<double>(model.horizon) / n_agents;
  const double margin = s + correction;
  return {sol.cond1_holds && margin <= 0.0, margin};
}

PopulationGapAnalysis compute_population_gap(const LqMftgModel& model,
                                             const PolicyProfile& policy) {
  require_policy_dims(model, policy);
  const int T = model.horizon;
  const int m = model.state_dim;
  const double g2 = model.gamma * model.gamma;
  const int n = (T + 1) * m;
  const auto loops = closed_loop_matrices(model, policy);

  PopulationGapAnalysis out;
  out.horizon = T;
  out.sigma_f = model.sigma.norm();

  auto build_psi = [&](const std::vector<Mat>& loop) {
    Mat psi = Mat::Zero(n, n);
    for (int t = 0; t <= T; ++t) {
      psi.block(t * m, t * m, m, m) = Mat::Identity(m, m);
      Mat prod = Mat::Identity(m, m);
      for (int s = t - 1; s >= 0; --s) {
        prod = prod * loop[s];  // loop[t-1] * ... * loop[s]
        psi.block(t * m, s * m, m, m) = prod;
      }
    }
    return psi;
  };
  out.psi = build_psi(loops.deviation);
  out.psi_bar = build_psi(loops.mean);

  // Block-diagonal stage weights Q_t + K' diag(I, -g^2 I) K with the
  // stacked gains; zero gains at the terminal index.
  Mat qhat = Mat::Zero(n, n);
  Mat qbar_hat = Mat::Zero(n, n);
  for (int t = 0; t <= T; ++t) {
    Mat wy = model.q[t];
    Mat wz = model.q_bar[t];
    if (t < T) {
      wy += policy.k1[t].transpose() * policy.k1[t] -
            g2 * policy.k2[t].transpose() * policy.k2[t];
      wz += policy.l1[t].transpose() * policy.l1[t] -
            g2 * policy.l2[t].transpose() * policy.l2[t];
    }
    qhat.block(t * m, t * m, m, m) = wy;
    qbar_hat.block(t * m, t * m, m, m) = wz;
  }

  out.c1 = (out.psi.transpose() * qhat * out.psi).norm() +
           (out.psi_bar.transpose() * qbar_hat * out.psi_bar).norm();
  return out;
}

double finite_population_constant(const LqMftgModel& model,
                                  const RiccatiSolution& sol) {
  const double at_zero =
      compute_population_gap(model, PolicyProfile::zero(model)).c1;
  double c1 = at_zero;
  if (!sol.aborted)
    c1 = std::max(c1, compute_population_gap(model, sol.nash_gains).c1);
  return c1 * model.sigma.norm();
}

ValueRecursion compute_value_recursion(const LqMftgModel& model,
                                       const PolicyProfile& policy) {
  require_policy_dims(model, policy);
  const int T = model.horizon;
  const double g2 = model.gamma * model.gamma;

  ValueRecursion rec;
  rec.y_value.assign(T + 1, Mat());
  rec.z_value.assign(T + 1, Mat());
  rec.y_offset.assign(T + 1, 0.0);
  rec.z_offset.assign(T + 1, 0.0);
  rec.y_value[T] = model.q[T];
  rec.z_value[T] = model.q_bar[T];

  for (int s = T - 1; s >= 0; --s) {
    const Mat dy = model.a[s] - model.b[s] * policy.k1[s] + policy.k2[s];
    const Mat dz =
        model.a_tilde(s) - model.b_tilde(s) * policy.l1[s] + policy.l2[s];
    const Mat wy = model.q[s] + policy.k1[s].transpose() * policy.k1[s] -
                   g2 * policy.k2[s].transpose() * policy.k2[s];
    const Mat wz = model.q_bar[s] + policy.l1[s].transpose() * policy.l1[s] -
                   g2 * policy.l2[s].transpose() * policy.l2[s];
    rec.y_value[s] = symmetrize(wy + dy.transpose() * rec.y_value[s + 1] * dy);
    rec.z_value[s] = symmetrize(wz + dz.transpose() * rec.z_value[s + 1] * dz);
    rec.y_offset[s] =
        rec.y_offset[s + 1] + (rec.y_value[s + 1] * model.sigma).trace();
    rec.z_offset[s] =
        rec.z_offset[s + 1] + (rec.z_value[s + 1] * model.sigma_bar).trace();
  }
  return rec;
}

CostBreakdown closed_form_cost(const LqMftgModel& model,
                               const PolicyProfile& policy,
                               const Mat& init_y_cov, const Mat& init_z_cov,
                               int start_time) {
  if (start_time < 0 || start_time > model.horizon)
    throw std::invalid_argument("start_time must be in [0, T]");
  const int m = model.state_dim;
  if (init_y_cov.rows() != m || init_y_cov.cols() != m ||
      init_z_cov.rows() != m || init_z_cov.cols() != m)
    throw std::invalid_argument("initial covariance shape mismatch");

  CostBreakdown out;
  out.recursion = compute_value_recursion(model, policy);
  out.y_part = (out.recursion.y_value[start_time] * init_y_cov).trace() +
               out.recursion.y_offset[start_time];
  out.z_part = (out.recursion.z_value[start_time] * init_z_cov).trace() +
               out.recursion.z_offset[start_time];
  out.total = out.y_part + out.z_part;
  return out;
}

LqMftgModel finite_population_model(const LqMftgModel& model, int n_agents) {
  if (n_agents < 2) throw std::invalid_argument("n_agents must be >= 2");
  const double scale = static_cast<double>(n_agents - 1) / n_agents;
  LqMftgModel out = model;
  out.sigma_bar = model.sigma_bar + model.sigma / n_agents;
  out.sigma = scale * model.sigma;
  out.sigma0_bar = model.sigma0_bar + model.sigma0 / n_agents;
  out.sigma0 = scale * model.sigma0;
  return out;
}

BisectResult find_min_viable_gamma(const LqMftgModel& model, double lo,
                                   double hi, double tol,
                                   const ViabilityMode& mode) {
  if (!(0.0 < lo) || !(lo < hi)) throw std::invalid_argument("need 0 < lo < hi");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");

  BisectResult result;
  auto viable_at = [&](double gamma) {
    LqMftgModel probe = model;
    probe.gamma = gamma;
    const auto sol = solve_riccati(probe);
    bool viable = false;
    if (mode.kind == ViabilityMode::kMeanField) {
      viable = check_viability_mf(probe, sol).viable;
    } else {
      PopulationGapAnalysis gap;
      gap.horizon = probe.horizon;
      gap.sigma_f = 1.0;
      gap.c1 = mode.c_override ? *mode.c_override
                               : finite_population_constant(probe, sol);
      viable = check_viability_finite(probe, sol, gap, mode.n_agents).viable;
    }
    result.evaluated.emplace_back(gamma, viable);
    return viable;
  };

  std::optional<double> found;
  if (!viable_at(hi)) {
    found = std::nullopt;
  } else if (viable_at(lo)) {
    found = lo;
  } else {
    double a = lo, b = hi;
    while (b - a > 0.5 * tol) {
      const double mid = 0.5 * (a + b);
      if (viable_at(mid))
        b = mid;
      else
        a = mid;
    }
    found = b;
  }

  // Viability is expected to be monotone in gamma; verify on the points we
  // actually evaluated instead of trusting it.
  auto pts = result.evaluated;
  std::sort(pts.begin(), pts.end());
  bool seen_viable = false;
  for (const auto& [g, v] : pts) {
    (void)g;
    if (seen_viable && !v) result.monotonic = false;
    if (v) seen_viable = true;
  }
  result.gamma = found;
  return result;
}

}  // namespace mftg
