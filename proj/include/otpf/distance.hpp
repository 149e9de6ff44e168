#pragma once

#include <Eigen/Core>

namespace otpf {

// All pairwise squared Euclidean distances between the rows of a (L x n)
// and the rows of b (M x n); result is L x M, entries clamped at zero.
Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace otpf
