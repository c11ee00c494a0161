#pragma once

#include <cstdint>
#include <vector>

#include "mftg/gaussian.hpp"
#include "mftg/model.hpp"
#include "mftg/rng.hpp"
#include "mftg/types.hpp"

namespace mftg {

// M agents at one timestep; states holds one column per agent.
struct PopulationState {
  Mat states;          // m x M
  Vec empirical_mean;  // (1/M) sum of columns
  int time = 0;

  int n_agents() const { return static_cast<int>(states.cols()); }
};

struct SimConfig {
  int n_agents = 2;       // M, distinct from the zero-order mini-batch N_b
  int n_rollouts = 1;
  std::uint64_t seed = 0;
  bool antithetic = false;  // pair rollouts with negated noise
};

struct CostReport {
  double total = 0.0;   // = y_part + z_part, computed from the same paths
  double y_part = 0.0;
  double z_part = 0.0;
  double std_error = 0.0;  // across-rollout standard error of the mean
};

// Advances every agent one step under the gains at the current time:
//   x_i' = (A - B K1 + K2)(x_i - zmean) + (At - Bt L1 + L2) zmean
//          + w_i + wbar,
// with w_i ~ N(0, Sigma) i.i.d. per agent and wbar ~ N(0, SigmaBar) shared.
// noise_sign = -1 negates all draws (antithetic pairing).
PopulationState step_population(const PopulationState& state,
                                const LqMftgModel& model, const Mat& k1,
                                const Mat& k2, const Mat& l1, const Mat& l2,
                                RngStream& rng, double noise_sign = 1.0);

// Unbiased Monte-Carlo estimate of the per-agent cost averaged over agents
// and rollouts; initial states x_i0 = w0_i + wbar0. The y/z split uses
// y_i = x_i - zmean and the empirical mean.
CostReport rollout_cost(const LqMftgModel& model, const PolicyProfile& policy,
                        const SimConfig& sim);

// Receding-horizon cost estimate at timestep t: y_t ~ N(0, eval_cov_y) per
// agent, the shared z_t ~ N(0, eval_cov_z); the stage at t uses the
// candidate gains, stages s > t use the frozen profile; process noise as in
// the model.
CostReport receding_horizon_cost(const LqMftgModel& model, const Mat& k1,
                                 const Mat& k2, const Mat& l1, const Mat& l2,
                                 const PolicyProfile& frozen, int t,
                                 const Mat& eval_cov_y, const Mat& eval_cov_z,
                                 const SimConfig& sim);

// Deterministic counterpart of receding_horizon_cost (Lyapunov recursion
// under the frozen continuation); used as the oracle for gradient checks.
CostReport exact_receding_cost(const LqMftgModel& model, const Mat& k1,
                               const Mat& k2, const Mat& l1, const Mat& l2,
                               const PolicyProfile& frozen, int t,
                               const Mat& eval_cov_y, const Mat& eval_cov_z);

// Precomputes the frozen tail (closed loops, stage weights, noise factors)
// once, so a zero-order batch can evaluate thousands of candidate gains at
// the same timestep cheaply. evaluate() is const and safe to call
// concurrently; the seed fixes the noise realization.
class RecedingEvaluator {
 public:
  RecedingEvaluator(const LqMftgModel& model, const PolicyProfile& frozen,
                    int t, const Mat& eval_cov_y, const Mat& eval_cov_z,
                    const SimConfig& sim);

  CostReport evaluate(const Mat& k1, const Mat& k2, const Mat& l1,
                      const Mat& l2, std::uint64_t seed) const;

 private:
  int t_ = 0;
  int horizon_ = 0;
  int state_dim_ = 0;
  SimConfig sim_;
  double gamma2_ = 0.0;
  Mat q_t_, qbar_t_;          // stage weights' constant parts at t
  Mat a_t_, b_t_, atil_, btil_;
  std::vector<Mat> dev_loop_, mean_loop_;  // s in (t, T)
  std::vector<Mat> wy_, wz_;               // s in (t, T]
  GaussianSampler noise_, noise_bar_, init_y_, init_z_;
};

}  // namespace mftg
