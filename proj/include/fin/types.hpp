#pragma once

#include <Eigen/Dense>

namespace fin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// true marks an entry constrained to zero.
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace fin
