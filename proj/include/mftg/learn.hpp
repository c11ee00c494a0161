#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mftg/grad.hpp"
#include "mftg/model.hpp"
#include "mftg/riccati.hpp"
#include "mftg/sim.hpp"
#include "mftg/types.hpp"

namespace mftg {

enum class GradientMode { kZeroOrder, kExact };

struct RgdaConfig {
  int inner_iters = 100;          // K
  double lr = 1e-3;               // eta
  bool lr_decay = false;          // eta_k = lr / (k + 1) when set
  SmoothingParams smoothing;      // zero-order mode only
  double proj_radius_sq = 100.0;  // D
  SimConfig sim;                  // zero-order cost evaluations
  Mat eval_cov_y, eval_cov_z;     // Sigma_y, Sigma_z (identity when empty)
  std::uint64_t seed = 0;
  GradientMode gradient_mode = GradientMode::kExact;
  // Exact mode only: stop an inner loop once the gradient norm drops
  // below early_stop_grad_norm.
  bool early_stop = false;
  double early_stop_grad_norm = 1e-10;
};

struct TraceRow {
  int t = 0;  // -1 for full-horizon (baseline) iterations
  int k = 0;
  double cost_estimate = 0.0;
  bool has_gap = false;  // oracle gap columns populated
  double err_k = 0.0;    // max_j |K^j - K^{j*}| at this t (spectral)
  double err_l = 0.0;
  double grad_norm = 0.0;
  bool proj_active = false;
  double wall_ms = 0.0;
  // Distance to the inner loop's own saddle (local NE given the frozen
  // future); diagnostics only, not part of the CSV schema.
  double target_gap = 0.0;
};

struct LearningTrace {
  std::vector<TraceRow> rows;
  // Cost evaluations (zero-order) or analytic gradient evaluations (exact)
  // consumed per trace row, cumulative accounting for budget matching.
  double evals_per_row = 0.0;
};

struct InnerGdaResult {
  Mat k1, k2, l1, l2;
  std::vector<TraceRow> rows;
};

// Inner projected gradient descent-ascent at timestep t with the future
// frozen. Initializes the gains at zero; per iteration, the descent step
// on (K1, L1) runs first, then the ascent step on (K2, L2) against the
// freshly updated controller. Throws NumericalError naming (t, k) on
// non-finite values.
InnerGdaResult inner_gda(const LqMftgModel& model, int t,
                         const PolicyProfile& frozen, const RgdaConfig& cfg,
                         const RiccatiSolution* oracle);

struct LearnResult {
  PolicyProfile policy;
  LearningTrace trace;
};

// Receding-horizon gradient descent-ascent: outer loop t = T-1 down to 0,
// each timestep solved by inner_gda with future gains frozen at the values
// already computed. Exact mode is the E-RGDA variant.
LearnResult rgda(const LqMftgModel& model, const RgdaConfig& cfg,
                 const RiccatiSolution* oracle);

// Full-horizon baseline: simultaneous projected descent-ascent on the
// gains of every timestep at once against the total cost, with analytic
// gradients assembled from the current (not frozen) continuation values
// and the state covariances propagated from (eval_cov_y, eval_cov_z).
LearnResult baseline_gda(const LqMftgModel& model, const RgdaConfig& cfg,
                         const RiccatiSolution* oracle);

struct NashGapReport {
  std::vector<double> err_k, err_l;  // per t, spectral norm
  double max_err_k = 0.0;
  double max_err_l = 0.0;
};

NashGapReport nash_gap(const PolicyProfile& policy,
                       const RiccatiSolution& oracle);

// D = 4 max_t |stacked Nash gains|^2 when the oracle solved, else the
// configured fallback.
double default_projection_radius_sq(const RiccatiSolution& oracle,
                                    double fallback = 100.0);

}  // namespace mftg
