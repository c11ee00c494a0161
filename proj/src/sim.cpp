#include "mftg/sim.hpp"

#include <cmath>
#include <vector>

#include "mftg/errors.hpp"
#include "mftg/gaussian.hpp"
#include "mftg/riccati.hpp"
#include "mftg/threading.hpp"

namespace mftg {

namespace {

constexpr std::uint64_t kRolloutKey = 0x726f6c6cU;    // rollout streams
constexpr std::uint64_t kRecedingKey = 0x72686f72U;   // receding-horizon

// Stage weights Q + K1'K1 - g^2 K2'K2 (and the z analog).
Mat stage_weight(const Mat& q, const Mat& g1, const Mat& g2, double gamma2) {
  return q + g1.transpose() * g1 - gamma2 * g2.transpose() * g2;
}

// (1/M) sum_i v_i' W v_i over the columns of V.
double mean_quadratic(const Mat& w, const Mat& v) {
  return (v.cwiseProduct(w * v)).sum() / static_cast<double>(v.cols());
}

struct RolloutAccumulator {
  double y = 0.0;
  double z = 0.0;
};

// One simulated path of the M-agent population from `start` to T under
// per-step closed loops and stage weights. `states` holds the population at
// time `start` and is consumed. Draw order per step: per-agent noise
// matrix, then the shared noise vector.
RolloutAccumulator run_path(const LqMftgModel& model,
                            const std::vector<Mat>& dev_loop,
                            const std::vector<Mat>& mean_loop,
                            const std::vector<Mat>& wy,
                            const std::vector<Mat>& wz,
                            const GaussianSampler& noise,
                            const GaussianSampler& noise_bar, int start,
                            Mat& states, RngStream& rng, double sign) {
  const int T = model.horizon;
  const int m_agents = static_cast<int>(states.cols());
  RolloutAccumulator acc;
  Vec zmean(model.state_dim);
  Mat dev(model.state_dim, m_agents);

  for (int t = start; t <= T; ++t) {
    zmean = states.rowwise().mean();
    dev = states.colwise() - zmean;
    const int w_idx = t - start;
    acc.y += mean_quadratic(wy[w_idx], dev);
    acc.z += zmean.dot(wz[w_idx] * zmean);
    if (t == T) break;

    states.noalias() = dev_loop[t] * dev;
    if (!noise.is_zero())
      states.noalias() += sign * noise.sample_matrix(m_agents, rng);
    Vec shift = mean_loop[t] * zmean;
    if (!noise_bar.is_zero()) shift += sign * noise_bar.sample(rng);
    states.colwise() += shift;
  }
  return acc;
}

CostReport reduce_rollouts(const std::vector<RolloutAccumulator>& per_rollout,
                           bool antithetic) {
  // Antithetic pairs are one estimation unit; averaging first keeps the
  // standard error honest.
  std::vector<RolloutAccumulator> units;
  if (antithetic) {
    for (std::size_t i = 0; i < per_rollout.size(); i += 2) {
      if (i + 1 < per_rollout.size()) {
        units.push_back({0.5 * (per_rollout[i].y + per_rollout[i + 1].y),
                         0.5 * (per_rollout[i].z + per_rollout[i + 1].z)});
      } else {
        units.push_back(per_rollout[i]);
      }
    }
  } else {
    units = per_rollout;
  }

  const double n = static_cast<double>(units.size());
  CostReport report;
  for (const auto& u : units) {
    report.y_part += u.y;
    report.z_part += u.z;
  }
  report.y_part /= n;
  report.z_part /= n;
  report.total = report.y_part + report.z_part;

  if (units.size() > 1) {
    double ss = 0.0;
    for (const auto& u : units) {
      const double d = (u.y + u.z) - report.total;
      ss += d * d;
    }
    report.std_error = std::sqrt(ss / (n * (n - 1.0)));
  }
  return report;
}

}  // namespace

PopulationState step_population(const PopulationState& state,
                                const LqMftgModel& model, const Mat& k1,
                                const Mat& k2, const Mat& l1, const Mat& l2,
                                RngStream& rng, double noise_sign) {
  if (state.time < 0 || state.time >= model.horizon)
    throw std::invalid_argument("state.time must be in [0, T)");
  const int t = state.time;
  const int m_agents = state.n_agents();
  const Mat dev_loop = model.a[t] - model.b[t] * k1 + k2;
  const Mat mean_loop = model.a_tilde(t) - model.b_tilde(t) * l1 + l2;
  const GaussianSampler noise(model.sigma);
  const GaussianSampler noise_bar(model.sigma_bar);

  PopulationState next;
  next.time = t + 1;
  const Mat dev = state.states.colwise() - state.empirical_mean;
  next.states = dev_loop * dev;
  if (!noise.is_zero())
    next.states += noise_sign * noise.sample_matrix(m_agents, rng);
  Vec shift = mean_loop * state.empirical_mean;
  if (!noise_bar.is_zero()) shift += noise_sign * noise_bar.sample(rng);
  next.states.colwise() += shift;
  next.empirical_mean = next.states.rowwise().mean();
  return next;
}

CostReport rollout_cost(const LqMftgModel& model, const PolicyProfile& policy,
                        const SimConfig& sim) {
  require_policy_dims(model, policy);
  if (sim.n_agents < 2) throw std::invalid_argument("n_agents must be >= 2");
  if (sim.n_rollouts < 1)
    throw std::invalid_argument("n_rollouts must be >= 1");

  const int T = model.horizon;
  const double g2 = model.gamma * model.gamma;
  const auto loops = closed_loop_matrices(model, policy);

  std::vector<Mat> wy(T + 1), wz(T + 1);
  for (int t = 0; t < T; ++t) {
    wy[t] = stage_weight(model.q[t], policy.k1[t], policy.k2[t], g2);
    wz[t] = stage_weight(model.q_bar[t], policy.l1[t], policy.l2[t], g2);
  }
  wy[T] = model.q[T];
  wz[T] = model.q_bar[T];

  const GaussianSampler noise(model.sigma);
  const GaussianSampler noise_bar(model.sigma_bar);
  const GaussianSampler init(model.sigma0);
  const GaussianSampler init_bar(model.sigma0_bar);

  std::vector<RolloutAccumulator> per_rollout(sim.n_rollouts);
  parallel_for(sim.n_rollouts, [&](int r) {
    const std::uint64_t stream_idx = sim.antithetic ? r / 2 : r;
    const double sign = (sim.antithetic && (r % 2 == 1)) ? -1.0 : 1.0;
    RngStream rng(sim.seed, kRolloutKey, stream_idx);

    // x_i0 = w0_i + wbar0; per-agent draws first, then the shared draw.
    Mat states = init.is_zero()
                     ? Mat::Zero(model.state_dim, sim.n_agents)
                     : Mat(sign * init.sample_matrix(sim.n_agents, rng));
    if (!init_bar.is_zero()) {
      const Vec shared = sign * init_bar.sample(rng);
      states.colwise() += shared;
    }
    per_rollout[r] = run_path(model, loops.deviation, loops.mean, wy, wz,
                              noise, noise_bar, 0, states, rng, sign);
  });

  return reduce_rollouts(per_rollout, sim.antithetic);
}

RecedingEvaluator::RecedingEvaluator(const LqMftgModel& model,
                                     const PolicyProfile& frozen, int t,
                                     const Mat& eval_cov_y,
                                     const Mat& eval_cov_z,
                                     const SimConfig& sim)
    : t_(t),
      horizon_(model.horizon),
      state_dim_(model.state_dim),
      sim_(sim),
      gamma2_(model.gamma * model.gamma),
      q_t_(model.q[t]),
      qbar_t_(model.q_bar[t]),
      a_t_(model.a[t]),
      b_t_(model.b[t]),
      atil_(model.a_tilde(t)),
      btil_(model.b_tilde(t)),
      noise_(model.sigma),
      noise_bar_(model.sigma_bar),
      init_y_(eval_cov_y),
      init_z_(eval_cov_z) {
  require_policy_dims(model, frozen);
  if (t < 0 || t >= model.horizon)
    throw std::invalid_argument("t must be in [0, T)");
  if (sim.n_agents < 2) throw std::invalid_argument("n_agents must be >= 2");
  for (int s = t + 1; s < horizon_; ++s) {
    dev_loop_.push_back(model.a[s] - model.b[s] * frozen.k1[s] +
                        frozen.k2[s]);
    mean_loop_.push_back(model.a_tilde(s) -
                         model.b_tilde(s) * frozen.l1[s] + frozen.l2[s]);
    wy_.push_back(stage_weight(model.q[s], frozen.k1[s], frozen.k2[s],
                               gamma2_));
    wz_.push_back(stage_weight(model.q_bar[s], frozen.l1[s], frozen.l2[s],
                               gamma2_));
  }
  wy_.push_back(model.q[horizon_]);
  wz_.push_back(model.q_bar[horizon_]);
}

CostReport RecedingEvaluator::evaluate(const Mat& k1, const Mat& k2,
                                       const Mat& l1, const Mat& l2,
                                       std::uint64_t seed) const {
  const Mat cand_wy = stage_weight(q_t_, k1, k2, gamma2_);
  const Mat cand_wz = stage_weight(qbar_t_, l1, l2, gamma2_);
  const Mat cand_dev = a_t_ - b_t_ * k1 + k2;
  const Mat cand_mean = atil_ - btil_ * l1 + l2;

  std::vector<RolloutAccumulator> per_rollout(sim_.n_rollouts);
  parallel_for(sim_.n_rollouts, [&](int r) {
    const std::uint64_t stream_idx = sim_.antithetic ? r / 2 : r;
    const double sign = (sim_.antithetic && (r % 2 == 1)) ? -1.0 : 1.0;
    RngStream rng(seed, kRecedingKey, stream_idx);

    // x_i = z + y_i with y_i ~ N(0, cov_y) i.i.d., z ~ N(0, cov_z) shared.
    Mat states = init_y_.is_zero()
                     ? Mat::Zero(state_dim_, sim_.n_agents)
                     : Mat(sign * init_y_.sample_matrix(sim_.n_agents, rng));
    if (!init_z_.is_zero()) {
      const Vec shared = sign * init_z_.sample(rng);
      states.colwise() += shared;
    }

    RolloutAccumulator acc;
    Vec zmean(state_dim_);
    Mat dev(state_dim_, sim_.n_agents);
    for (int s = t_; s <= horizon_; ++s) {
      zmean = states.rowwise().mean();
      dev = states.colwise() - zmean;
      const bool candidate_stage = s == t_;
      const Mat& wy = candidate_stage ? cand_wy : wy_[s - t_ - 1];
      const Mat& wz = candidate_stage ? cand_wz : wz_[s - t_ - 1];
      acc.y += mean_quadratic(wy, dev);
      acc.z += zmean.dot(wz * zmean);
      if (s == horizon_) break;

      const Mat& dloop = candidate_stage ? cand_dev : dev_loop_[s - t_ - 1];
      const Mat& mloop = candidate_stage ? cand_mean : mean_loop_[s - t_ - 1];
      states.noalias() = dloop * dev;
      if (!noise_.is_zero())
        states.noalias() += sign * noise_.sample_matrix(sim_.n_agents, rng);
      Vec shift = mloop * zmean;
      if (!noise_bar_.is_zero()) shift += sign * noise_bar_.sample(rng);
      states.colwise() += shift;
    }
    per_rollout[r] = acc;
  });

  return reduce_rollouts(per_rollout, sim_.antithetic);
}

CostReport receding_horizon_cost(const LqMftgModel& model, const Mat& k1,
                                 const Mat& k2, const Mat& l1, const Mat& l2,
                                 const PolicyProfile& frozen, int t,
                                 const Mat& eval_cov_y, const Mat& eval_cov_z,
                                 const SimConfig& sim) {
  const RecedingEvaluator evaluator(model, frozen, t, eval_cov_y, eval_cov_z,
                                    sim);
  return evaluator.evaluate(k1, k2, l1, l2, sim.seed);
}

CostReport exact_receding_cost(const LqMftgModel& model, const Mat& k1,
                               const Mat& k2, const Mat& l1, const Mat& l2,
                               const PolicyProfile& frozen, int t,
                               const Mat& eval_cov_y,
                               const Mat& eval_cov_z) {
  PolicyProfile with_candidate = frozen;
  with_candidate.k1[t] = k1;
  with_candidate.k2[t] = k2;
  with_candidate.l1[t] = l1;
  with_candidate.l2[t] = l2;
  const auto cost =
      closed_form_cost(model, with_candidate, eval_cov_y, eval_cov_z, t);
  return {cost.total, cost.y_part, cost.z_part, 0.0};
}

}  // namespace mftg
