#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "echonav/geometry.hpp"
#include "echonav/scene.hpp"

namespace echonav {

/// Ray-offset guard used for rays leaving a surface.
inline constexpr double kRayEpsilon = 1e-4;

/// Rays continuing from a hit start this far off the surface, along its normal, with tmin = 0.
/// An offset along the ray instead would skip a neighbouring wall near edges and corners.
inline constexpr double kSurfaceOffset = 1e-7;

inline Vec3 offset_origin(const Vec3& position, const Vec3& normal) {
  return position + normal * kSurfaceOffset;
}

struct Hit {
  double t = 0.0;
  std::uint32_t triangle = 0;
  Vec3 position;
  /// Unit geometric normal, flipped to face the side the ray arrived from.
  Vec3 normal;
  std::string_view cls;
};

/// Bounding-volume hierarchy over a scene's triangles (binned SAH build). Read-only after
/// construction and safe for concurrent queries.
class AccelStructure {
 public:
  explicit AccelStructure(Scene scene);

  const Scene& scene() const { return scene_; }

  /// Nearest hit with t in (tmin, tmax).
  std::optional<Hit> closest_hit(const Vec3& origin, const Vec3& dir, double tmin = kRayEpsilon,
                                 double tmax = std::numeric_limits<double>::infinity()) const;

  /// True if any triangle is hit with t in (tmin, tmax).
  bool occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const;

  /// Invokes `fn(triangle, t)` for every hit with t in (tmin, tmax), in no particular order.
  /// Returning false from `fn` stops the traversal.
  template <typename Fn>
  void for_each_hit(const Vec3& origin, const Vec3& dir, double tmin, double tmax, Fn&& fn) const {
    double limit = tmax;
    traverse(origin, dir, tmin, limit, [&](std::uint32_t prim, double& /*tmax*/) {
      double t = 0.0;
      if (intersect_triangle(prim, origin, dir, tmin, tmax, t)) return fn(prim_ids_[prim], t);
      return true;
    });
  }

  /// Exhaustive scan over all triangles (reference path for benchmarking).
  std::optional<Hit> closest_hit_brute_force(const Vec3& origin, const Vec3& dir,
                                             double tmin = kRayEpsilon,
                                             double tmax = std::numeric_limits<double>::infinity()) const;

  /// Oriented plane of a triangle as seen from `side` (normal faces `side`).
  Vec3 facing_normal(std::uint32_t triangle, const Vec3& incoming_dir) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  // 32-byte node; float bounds are rounded outward so they stay conservative.
  struct Node {
    float lo[3], hi[3];
    std::uint32_t offset = 0;  // first triangle (leaf) or right child (interior)
    std::uint16_t count = 0;   // > 0 for leaves
    std::uint8_t axis = 0;
  };
  // Plane-first test: n = e1 x e2 and w = n.v0 reject most candidates on t alone, and only then
  // are the dual vectors (a1, a2) that turn the hit point into barycentrics fetched.
  struct TriPlane {
    Vec3 n;
    double w;
  };
  struct TriEdges {
    Vec3 v0, a1, a2;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Aabb>& boxes,
                      std::vector<Vec3>& centroids);
  bool intersect_triangle(std::uint32_t prim, const Vec3& o, const Vec3& d, double tmin, double tmax,
                          double& t_out) const;
  Hit make_hit(std::uint32_t triangle, double t, const Vec3& origin, const Vec3& dir) const;

  // Visits primitives of every leaf whose box overlaps (tmin, tmax) front to back. `visit(prim,
  // tmax)` may shrink tmax and returns false to stop.
  template <typename Visitor>
  void traverse(const Vec3& origin, const Vec3& dir, double tmin, double& tmax, Visitor&& visit) const {
    if (nodes_.empty()) return;
    const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    double entry = 0.0;
    if (!box_hit(nodes_[0], origin, inv, tmin, tmax, entry)) return;
    // Children are tested before they are pushed; the nearer one is visited first and a popped
    // node is skipped once a closer hit has been found.
    struct Pending {
      std::uint32_t node;
      double entry;
    };
    Pending stack[64];
    int top = 0;
    std::uint32_t current = 0;
    while (true) {
      const Node& node = nodes_[current];
      if (node.count > 0) {
        for (std::uint32_t i = 0; i < node.count; ++i)
          if (!visit(node.offset + i, tmax)) return;
      } else {
        double t_left = 0.0, t_right = 0.0;
        const std::uint32_t left = current + 1, right = node.offset;
        const bool hit_left = box_hit(nodes_[left], origin, inv, tmin, tmax, t_left);
        const bool hit_right = box_hit(nodes_[right], origin, inv, tmin, tmax, t_right);
        if (hit_left && hit_right) {
          if (t_right < t_left) {
            stack[top++] = {left, t_left};
            current = right;
          } else {
            stack[top++] = {right, t_right};
            current = left;
          }
          continue;
        }
        if (hit_left || hit_right) {
          current = hit_left ? left : right;
          continue;
        }
      }
      do {
        if (top == 0) return;
        --top;
      } while (stack[top].entry > tmax);
      current = stack[top].node;
    }
  }

  // Branch-free slab test. A NaN slab distance (0 * inf: origin on a slab plane of a parallel ray)
  // compares false everywhere and leaves the interval unchanged.
  static bool box_hit(const Node& b, const Vec3& o, const Vec3& inv, double tmin, double tmax, double& entry) {
    double t0 = tmin;
    double t1 = tmax;
    for (int a = 0; a < 3; ++a) {
      const double tn = (static_cast<double>(b.lo[a]) - o[a]) * inv[a];
      const double tf = (static_cast<double>(b.hi[a]) - o[a]) * inv[a];
      const bool flip = tn > tf;
      const double near = flip ? tf : tn;
      const double far = flip ? tn : tf;
      t0 = near > t0 ? near : t0;
      t1 = far < t1 ? far : t1;
    }
    entry = t0;
    return t0 <= t1 * (1.0 + 4e-16);
  }

  Scene scene_;
  std::vector<TriPlane> planes_;  // indexed by BVH primitive order
  std::vector<TriEdges> edges_;
  std::vector<std::uint32_t> prim_ids_;  // BVH order -> scene triangle id
  std::vector<Node> nodes_;
};

/// Nearest intersection from `origin` along unit `dir`, beyond the self-intersection guard.
std::optional<Hit> cast_ray(const AccelStructure& accel, const Vec3& origin, const Vec3& dir);

}  // namespace echonav
