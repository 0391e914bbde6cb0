#include "echonav/view.hpp"

#include <stdexcept>
#include <string_view>

namespace echonav {

std::array<float, 3> class_albedo(std::string_view cls) {
  if (cls == "floor") return {0.55f, 0.40f, 0.30f};
  if (cls == "wall") return {0.85f, 0.85f, 0.80f};
  if (cls == "ceiling") return {0.95f, 0.95f, 0.95f};
  if (cls == "door") return {0.50f, 0.30f, 0.15f};
  if (cls == "window") return {0.60f, 0.80f, 0.90f};
  if (cls == "sofa") return {0.30f, 0.35f, 0.60f};
  if (cls == "table") return {0.60f, 0.45f, 0.25f};
  return {0.5f, 0.5f, 0.5f};
}

ViewFrame render_view(const AccelStructure& accel, const Pose& pose, int resolution, double fov_degrees) {
  if (resolution < 1) throw std::invalid_argument("render_view: resolution must be >= 1");
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0))
    throw std::invalid_argument("render_view: fov must be in (0, 180) degrees");

  ViewFrame frame;
  frame.height = resolution;
  frame.width = resolution;
  frame.pose = pose;
  frame.depth.assign(static_cast<std::size_t>(resolution) * resolution, 0.0f);
  frame.rgb.assign(static_cast<std::size_t>(resolution) * resolution * 3, 0.0f);

  const Vec3 forward{std::cos(pose.heading), std::sin(pose.heading), 0.0};
  const Vec3 up{0.0, 0.0, 1.0};
  const Vec3 right = cross(forward, up);
  const double half = std::tan(0.5 * fov_degrees * kPi / 180.0);

  for (int row = 0; row < resolution; ++row) {
    const double sy = (1.0 - 2.0 * (row + 0.5) / resolution) * half;
    for (int col = 0; col < resolution; ++col) {
      const double sx = (2.0 * (col + 0.5) / resolution - 1.0) * half;
      const Vec3 dir = normalize(forward + right * sx + up * sy);
      const auto hit = accel.closest_hit(pose.position, dir, kRayEpsilon);
      if (!hit) continue;
      const std::size_t idx = static_cast<std::size_t>(row) * resolution + col;
      frame.depth[idx] = static_cast<float>(hit->t * dot(dir, forward));
      const auto albedo = class_albedo(hit->cls);
      for (int c = 0; c < 3; ++c) frame.rgb[idx * 3 + c] = albedo[c];
    }
  }
  return frame;
}

}  // namespace echonav
