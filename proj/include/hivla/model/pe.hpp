#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "hivla/core/errors.hpp"

namespace hivla::model {

/// Fixed 2d sinusoidal position encoding over pixel positions. Each input row
/// is an (x, y) position in a frame_w x frame_h frame; coordinates are
/// normalized to [0, 1] and scaled by 2*pi. The first d/2 output dims encode
/// y, the second d/2 encode x, interleaved sin/cos over geometric frequencies.
/// Every row has squared norm d/2. Requires d divisible by 4.
inline Eigen::MatrixXd sinusoidal_pe_2d(const Eigen::MatrixXd& positions, double frame_w,
                                        double frame_h, int d, double temperature = 10000.0) {
  if (d <= 0 || d % 4 != 0) throw ConfigError("2d encoding needs d divisible by 4");
  if (positions.cols() != 2) throw ConfigError("positions must be N x 2");
  if (frame_w <= 0.0 || frame_h <= 0.0) throw ConfigError("frame dims must be positive");

  const auto n = positions.rows();
  const int half = d / 2;
  const int pairs = half / 2;
  Eigen::MatrixXd out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ys = positions(i, 1) / frame_h * 2.0 * std::numbers::pi;
    const double xs = positions(i, 0) / frame_w * 2.0 * std::numbers::pi;
    for (int k = 0; k < pairs; ++k) {
      const double freq = std::pow(temperature, -2.0 * k / half);
      out(i, 2 * k) = std::sin(ys * freq);
      out(i, 2 * k + 1) = std::cos(ys * freq);
      out(i, half + 2 * k) = std::sin(xs * freq);
      out(i, half + 2 * k + 1) = std::cos(xs * freq);
    }
  }
  return out;
}

/// Fixed 1d sinusoidal encoding over integer positions 0..n-1, interleaved
/// sin/cos. Requires d even.
inline Eigen::MatrixXd sinusoidal_pe_1d(int n, int d, double temperature = 10000.0) {
  if (d <= 0 || d % 2 != 0) throw ConfigError("1d encoding needs even d");
  if (n <= 0) throw ConfigError("need at least one position");
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d / 2; ++k) {
      const double freq = std::pow(temperature, -2.0 * k / d);
      out(i, 2 * k) = std::sin(i * freq);
      out(i, 2 * k + 1) = std::cos(i * freq);
    }
  }
  return out;
}

/// Sinusoidal embedding of a continuous flow time tau in [0, 1], using the
/// same convention as the 1d encoding with tau scaled to [0, 1000].
inline Eigen::VectorXd timestep_embedding(double tau, int d, double temperature = 10000.0) {
  if (d <= 0 || d % 2 != 0) throw ConfigError("timestep embedding needs even d");
  Eigen::VectorXd out(d);
  const double pos = tau * 1000.0;
  for (int k = 0; k < d / 2; ++k) {
    const double freq = std::pow(temperature, -2.0 * k / d);
    out(2 * k) = std::sin(pos * freq);
    out(2 * k + 1) = std::cos(pos * freq);
  }
  return out;
}

}  // namespace hivla::model
