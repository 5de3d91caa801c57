#pragma once
#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace rsdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Library errors carry a category so the CLI can map them onto exit codes
// without string matching.
enum class ErrorKind {
  Config,        // malformed input / inconsistent parameters
  Assumption,    // a verified precondition does not hold
  Structural,    // operation not defined for this model shape
  Numeric,       // divergence, overflow, non-finite values
  Unsupported,   // parameters outside the supported regime
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long paths = 0;
};

// Sampling box for grid-based verification; the lattice has points_per_axis
// nodes per dimension on [lo, hi]^n.
struct GridSpec {
  double lo = -10.0;
  double hi = 10.0;
  int points_per_axis = 41;
};

}  // namespace rsdp
