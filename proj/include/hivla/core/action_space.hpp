#pragma once

#include <Eigen/Core>

#include "hivla/core/errors.hpp"

namespace hivla {

/// Layout of one action vector, shared by the simulator, the scripted expert
/// and the policy. Dimensions 0 and 1 are planar position deltas, the last
/// dimension is an absolute gripper openness target in [0, 1]; any dimensions
/// in between are reserved padding that the simulator ignores.
struct ActionSpace {
  int d_a = 3;
  double bound = 0.08;

  void validate() const {
    if (d_a < 3) throw ConfigError("action dim must be >= 3");
    if (bound <= 0.0) throw ConfigError("action bound must be positive");
  }

  /// Clamps every row of an (H, d_a) chunk into the valid action box:
  /// motion and padding dims to [-bound, bound], gripper dim to [0, 1].
  template <class Derived>
  void clamp_chunk(Eigen::MatrixBase<Derived>& chunk) const {
    using S = typename Derived::Scalar;
    const S b = static_cast<S>(bound);
    chunk.leftCols(d_a - 1) = chunk.leftCols(d_a - 1).cwiseMax(-b).cwiseMin(b);
    chunk.col(d_a - 1) = chunk.col(d_a - 1).cwiseMax(S(0)).cwiseMin(S(1));
  }

  /// Action that leaves the world unchanged apart from the step counter,
  /// given the current gripper openness.
  Eigen::VectorXd hold_action(double open_fraction) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(d_a);
    a(d_a - 1) = open_fraction;
    return a;
  }
};

}  // namespace hivla
