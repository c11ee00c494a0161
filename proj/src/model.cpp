#include "mftg/model.hpp"

#include <Eigen/Eigenvalues>

#include <set>
#include <sstream>

#include "mftg/errors.hpp"

namespace mftg {

namespace {

bool is_symmetric(const Mat& m, double tol) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()),
                                         Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

bool all_finite(const Mat& m) { return m.allFinite(); }

void check_shape(std::vector<std::string>& report, const std::string& name,
                 int t, const Mat& m, int rows, int cols) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << "[" << t << "] dimension mismatch: expected " << rows << "x"
       << cols << ", got " << m.rows() << "x" << m.cols();
    report.push_back(os.str());
  }
}

constexpr double kSymTol = 1e-9;
constexpr double kPsdTol = 1e-12;

}  // namespace

PolicyProfile PolicyProfile::zero(const LqMftgModel& model) {
  PolicyProfile p;
  p.k1.assign(model.horizon, Mat::Zero(model.control_dim, model.state_dim));
  p.l1.assign(model.horizon, Mat::Zero(model.control_dim, model.state_dim));
  p.k2.assign(model.horizon, Mat::Zero(model.state_dim, model.state_dim));
  p.l2.assign(model.horizon, Mat::Zero(model.state_dim, model.state_dim));
  return p;
}

std::vector<std::string> validate_model(const LqMftgModel& model) {
  std::vector<std::string> report;
  const int T = model.horizon;
  const int m = model.state_dim;
  const int p = model.control_dim;

  if (T < 1) report.push_back("horizon must be >= 1");
  if (m < 1) report.push_back("state_dim must be >= 1");
  if (p < 1) report.push_back("control_dim must be >= 1");
  if (!(model.gamma > 0.0)) report.push_back("gamma must be > 0");
  if (T < 1 || m < 1 || p < 1) return report;

  auto check_seq = [&](const std::string& name, const std::vector<Mat>& seq,
                       std::size_t len, int rows, int cols) {
    if (seq.size() != len) {
      std::ostringstream os;
      os << name << " has " << seq.size() << " entries, expected " << len;
      report.push_back(os.str());
      return;
    }
    for (std::size_t t = 0; t < seq.size(); ++t) {
      check_shape(report, name, static_cast<int>(t), seq[t], rows, cols);
      if (!all_finite(seq[t]))
        report.push_back(name + "[" + std::to_string(t) + "] has non-finite entries");
    }
  };

  check_seq("a", model.a, T, m, m);
  check_seq("a_bar", model.a_bar, T, m, m);
  check_seq("b", model.b, T, m, p);
  check_seq("b_bar", model.b_bar, T, m, p);
  check_seq("q", model.q, T + 1, m, m);
  check_seq("q_bar", model.q_bar, T + 1, m, m);

  auto check_spd = [&](const std::string& name, const std::vector<Mat>& seq) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const std::string tag = name + "[" + std::to_string(t) + "]";
      if (seq[t].rows() != m || seq[t].cols() != m || !all_finite(seq[t]))
        continue;  // already reported
      if (!is_symmetric(seq[t], kSymTol)) {
        report.push_back(tag + " not symmetric");
      } else if (min_eigenvalue(seq[t]) <= 0.0) {
        report.push_back(tag + " not positive definite");
      }
    }
  };
  check_spd("q", model.q);
  check_spd("q_bar", model.q_bar);

  auto check_cov = [&](const std::string& name, const Mat& cov) {
    if (cov.rows() != m || cov.cols() != m) {
      std::ostringstream os;
      os << name << " dimension mismatch: expected " << m << "x" << m
         << ", got " << cov.rows() << "x" << cov.cols();
      report.push_back(os.str());
      return;
    }
    if (!all_finite(cov)) {
      report.push_back(name + " has non-finite entries");
      return;
    }
    if (!is_symmetric(cov, kSymTol)) {
      report.push_back(name + " not symmetric");
    } else if (min_eigenvalue(cov) < -kPsdTol * (1.0 + cov.cwiseAbs().maxCoeff())) {
      report.push_back(name + " not positive semi-definite");
    }
  };
  check_cov("sigma", model.sigma);
  check_cov("sigma_bar", model.sigma_bar);
  check_cov("sigma0", model.sigma0);
  check_cov("sigma0_bar", model.sigma0_bar);

  return report;
}

namespace {

std::vector<Mat> read_matrix_seq(const Json& j, const std::string& key,
                                 std::size_t len, int rows, int cols) {
  std::vector<Mat> seq;
  if (json_is_matrix(j)) {
    // Time-invariant shorthand: broadcast one matrix across all t.
    seq.assign(len, matrix_from_json(j, key));
  } else if (j.is_array()) {
    for (std::size_t t = 0; t < j.size(); ++t)
      seq.push_back(matrix_from_json(j[t], key + "[" + std::to_string(t) + "]"));
    if (seq.size() != len)
      throw ConfigError(key, "expected " + std::to_string(len) +
                                 " matrices, got " + std::to_string(seq.size()));
  } else {
    throw ConfigError(key, "expected a matrix or an array of matrices");
  }
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq[t].rows() != rows || seq[t].cols() != cols) {
      std::ostringstream os;
      os << "expected " << rows << "x" << cols << " at index " << t << ", got "
         << seq[t].rows() << "x" << seq[t].cols();
      throw ConfigError(key, os.str());
    }
  }
  return seq;
}

int read_positive_int(const Json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 1)
    throw ConfigError(key, "expected a positive integer");
  return j.get<int>();
}

}  // namespace

LqMftgModel model_from_json(const Json& j, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context, "top level must be an object");

  static const std::set<std::string> known = {
      "horizon", "state_dim", "control_dim", "gamma", "a",      "a_bar",
      "b",       "b_bar",     "q",           "q_bar", "sigma",  "sigma_bar",
      "sigma0",  "sigma0_bar"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw ConfigError(key, "unknown key");
  }
  for (const auto& key : known) {
    if (!j.contains(key)) throw ConfigError(key, "missing required key");
  }

  LqMftgModel model;
  model.horizon = read_positive_int(j["horizon"], "horizon");
  model.state_dim = read_positive_int(j["state_dim"], "state_dim");
  model.control_dim = read_positive_int(j["control_dim"], "control_dim");
  if (!j["gamma"].is_number())
    throw ConfigError("gamma", "expected a number");
  model.gamma = j["gamma"].get<double>();

  const int T = model.horizon;
  const int m = model.state_dim;
  const int p = model.control_dim;
  model.a = read_matrix_seq(j["a"], "a", T, m, m);
  model.a_bar = read_matrix_seq(j["a_bar"], "a_bar", T, m, m);
  model.b = read_matrix_seq(j["b"], "b", T, m, p);
  model.b_bar = read_matrix_seq(j["b_bar"], "b_bar", T, m, p);
  model.q = read_matrix_seq(j["q"], "q", T + 1, m, m);
  model.q_bar = read_matrix_seq(j["q_bar"], "q_bar", T + 1, m, m);
  model.sigma = matrix_from_json(j["sigma"], "sigma");
  model.sigma_bar = matrix_from_json(j["sigma_bar"], "sigma_bar");
  model.sigma0 = matrix_from_json(j["sigma0"], "sigma0");
  model.sigma0_bar = matrix_from_json(j["sigma0_bar"], "sigma0_bar");

  const auto report = validate_model(model);
  if (!report.empty()) {
    std::ostringstream os;
    os << "invalid model";
    for (const auto& line : report) os << "; " << line;
    throw ConfigError(context, os.str());
  }
  return model;
}

LqMftgModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path), path.string());
}

Json model_to_json(const LqMftgModel& model) {
  Json j;
  j["horizon"] = model.horizon;
  j["state_dim"] = model.state_dim;
  j["control_dim"] = model.control_dim;
  j["gamma"] = model.gamma;
  j["a"] = matrix_seq_to_json(model.a);
  j["a_bar"] = matrix_seq_to_json(model.a_bar);
  j["b"] = matrix_seq_to_json(model.b);
  j["b_bar"] = matrix_seq_to_json(model.b_bar);
  j["q"] = matrix_seq_to_json(model.q);
  j["q_bar"] = matrix_seq_to_json(model.q_bar);
  j["sigma"] = matrix_to_json(model.sigma);
  j["sigma_bar"] = matrix_to_json(model.sigma_bar);
  j["sigma0"] = matrix_to_json(model.sigma0);
  j["sigma0_bar"] = matrix_to_json(model.sigma0_bar);
  return j;
}

void require_policy_dims(const LqMftgModel& model,
                         const PolicyProfile& policy) {
  const std::size_t T = static_cast<std::size_t>(model.horizon);
  if (policy.k1.size() != T || policy.k2.size() != T ||
      policy.l1.size() != T || policy.l2.size() != T)
    throw std::invalid_argument("policy sequences must have length T");
  const int m = model.state_dim;
  const int p = model.control_dim;
  for (std::size_t t = 0; t < T; ++t) {
    if (policy.k1[t].rows() != p || policy.k1[t].cols() != m ||
        policy.l1[t].rows() != p || policy.l1[t].cols() != m ||
        policy.k2[t].rows() != m || policy.k2[t].cols() != m ||
        policy.l2[t].rows() != m || policy.l2[t].cols() != m)
      throw std::invalid_argument("policy gain shape mismatch at t=" +
                                  std::to_string(t));
  }
}

ClosedLoops closed_loop_matrices(const LqMftgModel& model,
                                 const PolicyProfile& policy) {
  require_policy_dims(model, policy);
  ClosedLoops loops;
  loops.deviation.reserve(model.horizon);
  loops.mean.reserve(model.horizon);
  for (int t = 0; t < model.horizon; ++t) {
    loops.deviation.push_back(model.a[t] - model.b[t] * policy.k1[t] +
                              policy.k2[t]);
    loops.mean.push_back(model.a_tilde(t) - model.b_tilde(t) * policy.l1[t] +
                         policy.l2[t]);
  }
  return loops;
}

Json policy_to_json(const PolicyProfile& policy) {
  Json j;
  j["k1"] = matrix_seq_to_json(policy.k1);
  j["k2"] = matrix_seq_to_json(policy.k2);
  j["l1"] = matrix_seq_to_json(policy.l1);
  j["l2"] = matrix_seq_to_json(policy.l2);
  return j;
}

PolicyProfile policy_from_json(const Json& j, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context, "top level must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "k1" && key != "k2" && key != "l1" && key != "l2")
      throw ConfigError(key, "unknown key");
  }
  auto read_seq = [&](const char* key) {
    if (!j.contains(key)) throw ConfigError(key, "missing required key");
    std::vector<Mat> seq;
    const Json& arr = j[key];
    if (!arr.is_array() || json_is_matrix(arr))
      throw ConfigError(key, "expected an array of matrices");
    for (std::size_t t = 0; t < arr.size(); ++t)
      seq.push_back(
          matrix_from_json(arr[t], std::string(key) + "[" + std::to_string(t) + "]"));
    return seq;
  };
  PolicyProfile p;
  p.k1 = read_seq("k1");
  p.k2 = read_seq("k2");
  p.l1 = read_seq("l1");
  p.l2 = read_seq("l2");
  const std::size_t T = p.k1.size();
  if (p.k2.size() != T || p.l1.size() != T || p.l2.size() != T)
    throw ConfigError(context, "gain sequences have mismatched lengths");
  return p;
}

PolicyProfile load_policy(const std::filesystem::path& path) {
  return policy_from_json(read_json_file(path), path.string());
}

}  // namespace mftg
