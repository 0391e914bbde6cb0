#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "echonav/accel.hpp"

namespace echonav {

struct Pose {
  Vec3 position;
  /// Yaw in radians, counter-clockwise from +x.
  double heading = 0.0;
};

/// Egocentric depth + flat-shaded RGB frame, row-major, row 0 at the top.
struct ViewFrame {
  int height = 0;
  int width = 0;
  std::vector<float> depth;  // height * width meters; 0 where no geometry is hit
  std::vector<float> rgb;    // height * width * 3 in [0,1]
  Pose pose;

  float depth_at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
};

inline constexpr int kDefaultViewResolution = 128;
inline constexpr double kDefaultFovDegrees = 90.0;

/// Flat albedo for a semantic class (unknown classes get mid grey).
std::array<float, 3> class_albedo(std::string_view cls);

/// Pinhole render with one primary ray per pixel. Depth is the hit distance measured along the
/// view axis. Throws std::invalid_argument for resolution < 1 or fov outside (0, 180).
ViewFrame render_view(const AccelStructure& accel, const Pose& pose,
                      int resolution = kDefaultViewResolution, double fov_degrees = kDefaultFovDegrees);

}  // namespace echonav
