#include "mftg/gaussian.hpp"

#include <Eigen/Eigenvalues>

namespace mftg {

GaussianSampler::GaussianSampler(const Mat& cov) {
  const int n = static_cast<int>(cov.rows());
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (cov + cov.transpose()));
  Vec vals = eig.eigenvalues();
  zero_ = true;
  for (int i = 0; i < n; ++i) {
    if (vals(i) < 0.0) vals(i) = 0.0;  // PSD up to the validation tolerance
    if (vals(i) > 0.0) zero_ = false;
    vals(i) = std::sqrt(vals(i));
  }
  factor_ = eig.eigenvectors() * vals.asDiagonal();
}

Vec GaussianSampler::sample(RngStream& rng) const {
  const int n = dim();
  if (zero_) return Vec::Zero(n);
  Vec z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  return factor_ * z;
}

Mat GaussianSampler::sample_matrix(int cols, RngStream& rng) const {
  const int n = dim();
  if (zero_) return Mat::Zero(n, cols);
  Mat z(n, cols);
  fill_standard_normal(z, rng);
  return factor_ * z;
}

void fill_standard_normal(Eigen::Ref<Mat> out, RngStream& rng) {
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = rng.normal();
}

}  // namespace mftg
