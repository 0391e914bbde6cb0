#pragma once

#include <array>
#include <cmath>

#include "echonav/geometry.hpp"

namespace echonav {

/// Second-order ambisonics: 9 channels, ACN ordering, SN3D normalization.
inline constexpr int kShChannels = 9;
using ShArray = std::array<double, kShChannels>;

/// Real SH basis evaluated at unit direction `d` (ACN order W, Y, Z, X, V, T, R, S, U).
/// A zero vector (coincident source and listener) encodes as pure omni.
inline ShArray sh_encode(const Vec3& d) {
  if (d.x == 0.0 && d.y == 0.0 && d.z == 0.0) return {1, 0, 0, 0, 0, 0, 0, 0, 0};
  const double s3 = std::sqrt(3.0);
  const double x = d.x, y = d.y, z = d.z;
  return {1.0,
          y,
          z,
          x,
          s3 * x * y,
          s3 * y * z,
          0.5 * (3.0 * z * z - 1.0),
          s3 * x * z,
          0.5 * s3 * (x * x - y * y)};
}

/// Rotates the encoded field counter-clockwise by `angle` about +z: a source at azimuth phi
/// ends up at phi + angle.
inline ShArray sh_rotate_z(const ShArray& in, double angle) {
  ShArray out = in;
  const double c = std::cos(angle), s = std::sin(angle);
  const double c2 = std::cos(2.0 * angle), s2 = std::sin(2.0 * angle);
  out[3] = c * in[3] - s * in[1];
  out[1] = s * in[3] + c * in[1];
  out[7] = c * in[7] - s * in[5];
  out[5] = s * in[7] + c * in[5];
  out[8] = c2 * in[8] - s2 * in[4];
  out[4] = s2 * in[8] + c2 * in[4];
  return out;
}

}  // namespace echonav
