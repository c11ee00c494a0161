#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mftg/model.hpp"
#include "mftg/types.hpp"

namespace mftg {

// Solution of the coupled Riccati recursions
//   M_t    = Q_t + A_t' M_{t+1} Lambda_t^{-1} A_t,
//   Lambda_t = I + (B_t B_t' - gamma^{-2} I) M_{t+1},      M_T = Q_T,
// and the barred analog with (Atilde, Btilde, Qbar), plus the scalar noise
// accumulators N_t = N_{t+1} + tr(M_{t+1} Sigma) and
// Nbar_t = Nbar_{t+1} + tr(Mbar_{t+1} SigmaBar), N_T = Nbar_T = 0.
struct RiccatiSolution {
  std::vector<Mat> m_seq, m_bar_seq;           // T + 1 entries
  std::vector<Mat> lambda_seq, lambda_bar_seq; // T entries
  std::vector<double> n_seq, n_bar_seq;        // T + 1 entries
  PolicyProfile nash_gains;
  double nash_value = 0.0;
  // gamma^2 I - M_t and gamma^2 I - Mbar_t strictly positive definite at
  // every step (smallest eigenvalue above 1e-10).
  bool cond1_holds = false;
  // First timestep where the definiteness check failed or a Lambda factor
  // was singular; -1 when none.
  int failure_time = -1;
  // True when a singular Lambda aborted the recursion; earlier value
  // matrices are then unavailable.
  bool aborted = false;
};

RiccatiSolution solve_riccati(const LqMftgModel& model);

struct Viability {
  bool viable = false;
  double margin = 0.0;  // the scalar criterion S (plus C T / N in finite mode)
};

// Mean-field viability: cond1 and
//   S = sum_{t=1..T} tr((M_t - g^2 I) Sigma + (Mbar_t - g^2 I) SigmaBar)
//       + tr(M_0 Sigma0) + tr(Mbar_0 Sigma0Bar) <= 0.
// margin = S (infinity when the recursion aborted).
Viability check_viability_mf(const LqMftgModel& model,
                             const RiccatiSolution& sol);

// Noise-to-state operators of the closed loop and the population-gap
// constant. psi / psi_bar are (T+1) x (T+1) block lower-triangular with
// identity diagonal blocks; block (t, s) for s < t is the product of
// closed-loop matrices from s up to t-1.
struct PopulationGapAnalysis {
  Mat psi, psi_bar;
  double c1 = 0.0;       // |Psi' Qhat Psi|_F + |PsiBar' QbarHat PsiBar|_F
  double sigma_f = 0.0;  // |Sigma|_F
  int horizon = 0;

  // Bound on |J_M - J_inf| for an M-agent population.
  double gap_bound(int n_agents) const {
    return c1 * sigma_f * static_cast<double>(horizon) / n_agents;
  }
};

PopulationGapAnalysis compute_population_gap(const LqMftgModel& model,
                                             const PolicyProfile& policy);

// Conservative constant for the finite-population criterion: C1 sigma
// evaluated at the Nash gains and at the zero policy, whichever is larger.
double finite_population_constant(const LqMftgModel& model,
                                  const RiccatiSolution& sol);

// Finite-population viability: cond1 and S <= -C T / n_agents with
// C = c1 * sigma_f from `gap`. margin = S + C T / n_agents.
Viability check_viability_finite(const LqMftgModel& model,
                                 const RiccatiSolution& sol,
                                 const PopulationGapAnalysis& gap,
                                 int n_agents);

// Lyapunov value recursion for an arbitrary linear policy. Index s holds
// the cost-to-go matrix under the policy's gains at s..T-1; offsets
// accumulate the process-noise contributions, zero at T.
struct ValueRecursion {
  std::vector<Mat> y_value, z_value;      // T + 1 entries
  std::vector<double> y_offset, z_offset; // T + 1 entries
};

ValueRecursion compute_value_recursion(const LqMftgModel& model,
                                       const PolicyProfile& policy);

struct CostBreakdown {
  double total = 0.0;
  double y_part = 0.0;
  double z_part = 0.0;
  ValueRecursion recursion;
};

// Exact expected cost from `start_time` under `policy`, with y, z initial
// conditions distributed N(0, init_y_cov), N(0, init_z_cov) and process
// noise (Sigma, SigmaBar) as in the model.
CostBreakdown closed_form_cost(const LqMftgModel& model,
                               const PolicyProfile& policy,
                               const Mat& init_y_cov, const Mat& init_z_cov,
                               int start_time);

// The model whose mean-field-limit cost equals the exact M-agent expected
// cost: Sigma -> ((M-1)/M) Sigma, SigmaBar -> SigmaBar + Sigma/M, and the
// same reweighting for the initial covariances.
LqMftgModel finite_population_model(const LqMftgModel& model, int n_agents);

struct ViabilityMode {
  enum Kind { kMeanField, kFinite } kind = kMeanField;
  int n_agents = 0;                    // finite mode only
  std::optional<double> c_override;    // overrides the Theorem-2 constant
};

struct BisectResult {
  std::optional<double> gamma;  // empty: not viable anywhere in [lo, hi]
  bool monotonic = true;        // viability was monotone on evaluated points
  std::vector<std::pair<double, bool>> evaluated;
};

// Bisection for the smallest viable gamma in [lo, hi] within tol,
// exploiting (and checking, not assuming) monotonicity of viability.
BisectResult find_min_viable_gamma(const LqMftgModel& model, double lo,
                                   double hi, double tol,
                                   const ViabilityMode& mode);

}  // namespace mftg
