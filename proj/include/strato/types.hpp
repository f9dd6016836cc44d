#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace strato {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// States whose norm exceeds this are treated as diverged.
inline constexpr double blowup_threshold = 1e8;

// Invalid parameters, mismatched wiring, or unusable run configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A trajectory left the trust region or became non-finite. Carries the
// trajectory index and step so the failure can be replayed in isolation.
class BlowupError : public std::runtime_error {
 public:
  BlowupError(int trajectory, long step, double norm)
      : std::runtime_error("trajectory " + std::to_string(trajectory) +
                           " diverged at step " + std::to_string(step) +
                           " (|x| = " + std::to_string(norm) + ")"),
        trajectory(trajectory),
        step(step),
        norm(norm) {}

  int trajectory;
  long step;
  double norm;
};

}  // namespace strato
