#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>

namespace wml {

using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

using Index = Eigen::Index;

}  // namespace wml
