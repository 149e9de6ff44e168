#include "otpf/oracle.hpp"

#include <cmath>
#include <string>

#include "otpf/errors.hpp"

namespace otpf {

KalmanBucyResult kalman_bucy_oracle(double a, double b, double c, double q,
                                    double r, double m0, double p0,
                                    const MeasurementIncrementPath& path) {
  if (!(r > 0.0)) throw config_error("observation variance r must be positive");
  if (!(q >= 0.0)) throw config_error("process variance q must be nonnegative");
  if (!(p0 >= 0.0)) throw config_error("initial variance must be nonnegative");
  path.validate();
  if (path.increments.front().size() != 1)
    throw config_error("the oracle handles scalar measurements only");

  const double dt = path.dt;
  KalmanBucyResult out;
  out.times.reserve(path.steps() + 1);
  out.means.reserve(path.steps() + 1);
  out.variances.reserve(path.steps() + 1);
  out.times.push_back(path.t0);
  out.means.push_back(m0);
  out.variances.push_back(p0);

  double m = m0, p = p0;
  for (int n = 1; n <= path.steps(); ++n) {
    const double dy = path.increments[n - 1][0];
    const double gain = p * c / r;
    const double m_next = m + (a * m + b) * dt + gain * (dy - c * m * dt);
    const double p_next = p + (2.0 * a * p + q - p * p * c * c / r) * dt;
    if (!(p_next > 0.0) || !std::isfinite(p_next) || !std::isfinite(m_next))
      throw numerical_error("oracle variance left (0, inf) at step " +
                            std::to_string(n) + "; reduce dt");
    m = m_next;
    p = p_next;
    out.times.push_back(path.time_at(n));
    out.means.push_back(m);
    out.variances.push_back(p);
  }
  return out;
}

double kalman_bucy_stationary_variance(double a, double c, double q, double r) {
  if (!(r > 0.0) || c == 0.0)
    throw config_error("stationary variance needs r > 0 and c != 0");
  return r * (a + std::sqrt(a * a + c * c * q / r)) / (c * c);
}

}  // namespace otpf
