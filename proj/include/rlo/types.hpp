#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

namespace rlo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Index = Eigen::Index;

}  // namespace rlo
