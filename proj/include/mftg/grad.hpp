#pragma once

#include <functional>
#include <utility>

#include "mftg/model.hpp"
#include "mftg/riccati.hpp"
#include "mftg/rng.hpp"
#include "mftg/types.hpp"

namespace mftg {

enum class Player { kController = 1, kAdversary = 2 };

// One player's deviation and mean-field gains stacked vertically:
// [K; L], (2p) x m for the controller and (2m) x m for the adversary.
struct StackedGain {
  Mat value;
  Player player = Player::kController;

  static StackedGain stack(const Mat& k, const Mat& l, Player player);
  std::pair<Mat, Mat> unstack() const;  // (K, L)
  int entries() const { return static_cast<int>(value.size()); }
};

struct SmoothingParams {
  double radius = 0.1;  // r > 0
  int batch = 1;        // N_b >= 1
  // Subtract J(base) from each perturbed evaluation (variance reduction).
  bool baseline_shift = false;
  // Draw directions in antithetic pairs (e, -e); batch is rounded up to
  // even. Cancels the J(base)/r^2 term exactly.
  bool paired_directions = false;
};

struct GradientPair {
  Mat player1;  // d J / d [K1; L1], stacked
  Mat player2;  // d J / d [K2; L2], stacked
};

// Exact gradients of the receding-horizon cost at timestep t, with the
// continuation value matrices W = Ytilde_{t+1}, Wbar = Ztilde_{t+1} defined
// by the frozen future gains. Under the project sign convention:
//   dJ/dK1 = 2 ((I + B'WB) K1 - B'W (A + K2)) Sy
//   dJ/dK2 = 2 ((W - g^2 I) K2 + W (A - B K1)) Sy
// and the L-gradients use (Atilde, Btilde, Sz) with the z-part matrices.
GradientPair exact_gradient(const LqMftgModel& model, const Mat& k1,
                            const Mat& k2, const Mat& l1, const Mat& l2,
                            const PolicyProfile& frozen, int t,
                            const Mat& eval_cov_y, const Mat& eval_cov_z);

// Black-box cost; the sample index lets stochastic evaluators derive a
// fresh deterministic noise stream per perturbation.
using CostEvaluator = std::function<double(const StackedGain&, int)>;

struct ZeroOrderEstimate {
  StackedGain gradient;
  double mean_cost = 0.0;  // batch mean of the perturbed evaluations
};

// One-point sphere-smoothing estimator
//   ghat = (n / (N_b r^2)) sum_j J(base + e_j) e_j,  e_j ~ S^{n-1}(r),
// with n the entry count of the stacked gain; directions are normalized
// Gaussians scaled by r. Options in SmoothingParams select the
// baseline-subtracted and paired-direction variants.
ZeroOrderEstimate zero_order_gradient(const CostEvaluator& cost,
                                      const StackedGain& base,
                                      const SmoothingParams& smoothing,
                                      RngStream& rng);

// Radial projection onto { g : |g|_F^2 <= radius_sq }.
Mat project_ball(const Mat& gain, double radius_sq);
StackedGain project_ball(const StackedGain& gain, double radius_sq);

}  // namespace mftg
