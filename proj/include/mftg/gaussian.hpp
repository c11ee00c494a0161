#pragma once

#include "mftg/rng.hpp"
#include "mftg/types.hpp"

namespace mftg {

// Samples N(0, cov) via a square-root factor computed once from a symmetric
// eigendecomposition. Eigenvalues in [-1e-12, 0) are clipped to zero so
// singular covariances (including all-zero) sample degenerately instead of
// failing a Cholesky.
class GaussianSampler {
 public:
  GaussianSampler() = default;
  explicit GaussianSampler(const Mat& cov);

  bool is_zero() const { return zero_; }
  int dim() const { return static_cast<int>(factor_.rows()); }
  const Mat& factor() const { return factor_; }

  Vec sample(RngStream& rng) const;

  // One column per independent sample; shares the factor across columns.
  Mat sample_matrix(int cols, RngStream& rng) const;

 private:
  Mat factor_;
  bool zero_ = true;
};

// Fills `out` with independent standard normals.
void fill_standard_normal(Eigen::Ref<Mat> out, RngStream& rng);

}  // namespace mftg
