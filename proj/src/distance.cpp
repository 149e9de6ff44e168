#include "otpf/distance.hpp"

namespace otpf {

Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::VectorXd a2 = a.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * a * b.transpose();
  d.colwise() += a2;
  d.rowwise() += b2.transpose();
  // Cancellation can leave tiny negatives on (near-)identical rows.
  return d.cwiseMax(0.0);
}

}  // namespace otpf
