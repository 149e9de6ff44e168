#pragma once

#include <stdexcept>
#include <string>

namespace otpf {

// Invalid setup: bad dimensions, malformed configuration, unknown names.
// CLI maps this to exit code 1.
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Runtime numerical failure: weight collapse, infeasible transport,
// non-finite states, negative covariance. CLI maps this to exit code 2.
class numerical_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace otpf
