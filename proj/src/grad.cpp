#include "mftg/grad.hpp"

#include <cmath>
#include <vector>

#include "mftg/errors.hpp"
#include "mftg/threading.hpp"

namespace mftg {

StackedGain StackedGain::stack(const Mat& k, const Mat& l, Player player) {
  if (k.rows() != l.rows() || k.cols() != l.cols())
    throw std::invalid_argument("stacked gains must share a shape");
  StackedGain g;
  g.player = player;
  g.value.resize(k.rows() + l.rows(), k.cols());
  g.value.topRows(k.rows()) = k;
  g.value.bottomRows(l.rows()) = l;
  return g;
}

std::pair<Mat, Mat> StackedGain::unstack() const {
  const Eigen::Index half = value.rows() / 2;
  return {value.topRows(half), value.bottomRows(half)};
}

GradientPair exact_gradient(const LqMftgModel& model, const Mat& k1,
                            const Mat& k2, const Mat& l1, const Mat& l2,
                            const PolicyProfile& frozen, int t,
                            const Mat& eval_cov_y, const Mat& eval_cov_z) {
  if (t < 0 || t >= model.horizon)
    throw std::invalid_argument("t must be in [0, T)");
  const int m = model.state_dim;
  const double g2 = model.gamma * model.gamma;
  const Mat eye = Mat::Identity(m, m);

  // The continuation matrices depend only on the frozen gains at s > t.
  const auto rec = compute_value_recursion(model, frozen);
  const Mat& w = rec.y_value[t + 1];
  const Mat& wbar = rec.z_value[t + 1];

  const Mat& a = model.a[t];
  const Mat& b = model.b[t];
  const Mat atil = model.a_tilde(t);
  const Mat btil = model.b_tilde(t);

  const Mat gk1 =
      2.0 *
      ((Mat::Identity(b.cols(), b.cols()) + b.transpose() * w * b) * k1 -
       b.transpose() * w * (a + k2)) *
      eval_cov_y;
  const Mat gk2 = 2.0 * ((w - g2 * eye) * k2 + w * (a - b * k1)) * eval_cov_y;
  const Mat gl1 =
      2.0 *
      ((Mat::Identity(btil.cols(), btil.cols()) +
        btil.transpose() * wbar * btil) *
           l1 -
       btil.transpose() * wbar * (atil + l2)) *
      eval_cov_z;
  const Mat gl2 =
      2.0 * ((wbar - g2 * eye) * l2 + wbar * (atil - btil * l1)) * eval_cov_z;

  GradientPair out;
  out.player1 = StackedGain::stack(gk1, gl1, Player::kController).value;
  out.player2 = StackedGain::stack(gk2, gl2, Player::kAdversary).value;
  return out;
}

ZeroOrderEstimate zero_order_gradient(const CostEvaluator& cost,
                                      const StackedGain& base,
                                      const SmoothingParams& smoothing,
                                      RngStream& rng) {
  if (!(smoothing.radius > 0.0))
    throw std::invalid_argument("smoothing radius must be > 0");
  if (smoothing.batch < 1) throw std::invalid_argument("batch must be >= 1");

  const int n = base.entries();
  const Eigen::Index rows = base.value.rows();
  const Eigen::Index cols = base.value.cols();
  int batch = smoothing.batch;
  if (smoothing.paired_directions && batch % 2 != 0) ++batch;

  // Directions are drawn up front from the caller's stream so the cost
  // evaluations can run in any order (or in parallel) without changing the
  // result.
  std::vector<Mat> dirs(batch);
  for (int j = 0; j < batch; ++j) {
    if (smoothing.paired_directions && j % 2 == 1) {
      dirs[j] = -dirs[j - 1];
      continue;
    }
    Mat d(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) d(r, c) = rng.normal();
    const double norm = d.norm();
    dirs[j] = (smoothing.radius / (norm > 0.0 ? norm : 1.0)) * d;
  }

  std::vector<double> values(batch);
  parallel_for(batch, [&](int j) {
    StackedGain perturbed = base;
    perturbed.value += dirs[j];
    double v = cost(perturbed, j);
    if (smoothing.baseline_shift) v -= cost(base, j);
    values[j] = v;
  });

  Mat sum = Mat::Zero(rows, cols);
  double cost_sum = 0.0;
  for (int j = 0; j < batch; ++j) {
    sum += values[j] * dirs[j];
    cost_sum += values[j];
  }

  ZeroOrderEstimate est;
  est.gradient.player = base.player;
  est.gradient.value =
      (static_cast<double>(n) /
       (static_cast<double>(batch) * smoothing.radius * smoothing.radius)) *
      sum;
  est.mean_cost = cost_sum / batch;
  return est;
}

Mat project_ball(const Mat& gain, double radius_sq) {
  if (!(radius_sq > 0.0))
    throw std::invalid_argument("projection radius must be > 0");
  const double norm_sq = gain.squaredNorm();
  if (norm_sq <= radius_sq) return gain;
  return gain * std::sqrt(radius_sq / norm_sq);
}

StackedGain project_ball(const StackedGain& gain, double radius_sq) {
  StackedGain out = gain;
  out.value = project_ball(gain.value, radius_sq);
  return out;
}

}  // namespace mftg
