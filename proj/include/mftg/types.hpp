#pragma once

#include <Eigen/Dense>

namespace mftg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

}  // namespace mftg
