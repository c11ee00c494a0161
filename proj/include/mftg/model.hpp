#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mftg/json_io.hpp"
#include "mftg/types.hpp"

namespace mftg {

// Time-varying linear-quadratic mean-field-type game over t = 0..T, with
// controls applied at t = 0..T-1 and terminal weights at T.
//
// Dynamics of a generic agent:
//   x_{t+1} = A_t x + Abar_t xbar + B_t u1 + Bbar_t ubar1 + u2 + ubar2
//             + w + wbar,
// with idiosyncratic noise w ~ N(0, Sigma), common noise wbar ~ N(0,
// SigmaBar), and x_0 = w0 + wbar0 drawn from (Sigma0, Sigma0Bar). The
// adversary input u2 enters with an identity coefficient, so its gains are
// m x m. Control penalties are identity-weighted; models wanting weighted
// controls pre-scale B.
struct LqMftgModel {
  int horizon = 0;      // T >= 1
  int state_dim = 0;    // m
  int control_dim = 0;  // p
  std::vector<Mat> a, a_bar;  // T entries, m x m
  std::vector<Mat> b, b_bar;  // T entries, m x p
  std::vector<Mat> q, q_bar;  // T + 1 entries, m x m, SPD
  Mat sigma, sigma_bar;       // per-step noise covariances, m x m, PSD
  Mat sigma0, sigma0_bar;     // initial covariances, m x m, PSD
  double gamma = 0.0;         // attenuation level under test, > 0

  // Mean-field dynamics matrices.
  Mat a_tilde(int t) const { return a[t] + a_bar[t]; }
  Mat b_tilde(int t) const { return b[t] + b_bar[t]; }
};

// Time-indexed linear gains for both players, t = 0..T-1.
//
// Sign convention, fixed project-wide:
//   u1_t = -K1_t (x_t - xbar_t) - L1_t xbar_t   (minimizer)
//   u2_t = +K2_t (x_t - xbar_t) + L2_t xbar_t   (maximizer)
struct PolicyProfile {
  std::vector<Mat> k1;  // p x m
  std::vector<Mat> k2;  // m x m
  std::vector<Mat> l1;  // p x m
  std::vector<Mat> l2;  // m x m

  static PolicyProfile zero(const LqMftgModel& model);
};

// Closed-loop transition matrices of the decoupled deviation (y) and mean
// (z) processes:
//   deviation[t] = A_t - B_t K1_t + K2_t
//   mean[t]      = Atilde_t - Btilde_t L1_t + L2_t
struct ClosedLoops {
  std::vector<Mat> deviation;
  std::vector<Mat> mean;
};

// Reports every invariant violation with a field path; empty means valid.
// Total: no input crashes, violations are data.
std::vector<std::string> validate_model(const LqMftgModel& model);

// Loads and validates a model config (JSON; schema in the README).
// Time-invariant shorthand (a single matrix where a sequence is expected)
// broadcasts across all t. Unknown keys are rejected. Throws ConfigError
// naming the offending key.
LqMftgModel load_model(const std::filesystem::path& path);
LqMftgModel model_from_json(const Json& j, const std::string& context);
Json model_to_json(const LqMftgModel& model);

ClosedLoops closed_loop_matrices(const LqMftgModel& model,
                                 const PolicyProfile& policy);

// Gains file: keys k1, k2, l1, l2, each an array of matrices.
Json policy_to_json(const PolicyProfile& policy);
PolicyProfile policy_from_json(const Json& j, const std::string& context);
PolicyProfile load_policy(const std::filesystem::path& path);

// Checks policy/model shape agreement; throws std::invalid_argument.
void require_policy_dims(const LqMftgModel& model, const PolicyProfile& policy);

}  // namespace mftg
