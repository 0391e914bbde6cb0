#include "echonav/accel.hpp"

#include <numeric>

namespace echonav {

namespace {

constexpr int kBins = 32;
constexpr std::uint32_t kMaxLeafSize = 2;
// Barycentric slack so that rays through shared edges hit at least one triangle.
constexpr double kEdgeSlack = 1e-9;
constexpr double kBoxPad = 1e-7;

Aabb padded(Aabb b) {
  b.lo -= Vec3{kBoxPad, kBoxPad, kBoxPad};
  b.hi += Vec3{kBoxPad, kBoxPad, kBoxPad};
  return b;
}

}  // namespace

AccelStructure::AccelStructure(Scene scene) : scene_(std::move(scene)) {
  const auto n = static_cast<std::uint32_t>(scene_.triangle_count());
  if (n == 0) return;
  std::vector<Aabb> boxes(n);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) boxes[i].expand(scene_.vertex(i, c));
    centroids[i] = boxes[i].center();
  }
  prim_ids_.resize(n);
  std::iota(prim_ids_.begin(), prim_ids_.end(), 0u);
  nodes_.reserve(2 * n);
  build(0, n, boxes, centroids);

  planes_.resize(n);
  edges_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t id = prim_ids_[i];
    const Vec3 v0 = scene_.vertex(id, 0);
    const Vec3 e1 = scene_.vertex(id, 1) - v0;
    const Vec3 e2 = scene_.vertex(id, 2) - v0;
    const Vec3 n = cross(e1, e2);
    const double nn = dot(n, n);
    planes_[i] = {n, dot(n, v0)};
    edges_[i] = {v0, cross(e2, n) / nn, cross(n, e1) / nn};
  }
}

std::uint32_t AccelStructure::build(std::uint32_t begin, std::uint32_t end, std::vector<Aabb>& boxes,
                                    std::vector<Vec3>& centroids) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb bounds;
  Aabb centroid_bounds;
  for (std::uint32_t i = begin; i < end; ++i) {
    bounds.expand(boxes[prim_ids_[i]]);
    centroid_bounds.expand(centroids[prim_ids_[i]]);
  }
  const Aabb box = padded(bounds);
  for (int a = 0; a < 3; ++a) {
    nodes_[index].lo[a] = std::nextafter(static_cast<float>(box.lo[a]), -std::numeric_limits<float>::infinity());
    nodes_[index].hi[a] = std::nextafter(static_cast<float>(box.hi[a]), std::numeric_limits<float>::infinity());
  }

  const std::uint32_t count = end - begin;
  auto make_leaf = [&] {
    nodes_[index].offset = begin;
    nodes_[index].count = static_cast<std::uint16_t>(count);
    return index;
  };
  if (count <= kMaxLeafSize) return make_leaf();

  // Binned SAH over all three axes.
  struct Bin {
    Aabb box;
    std::uint32_t count = 0;
  };
  int axis = centroid_bounds.longest_axis();
  int best_axis = -1, best_split = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = centroid_bounds.lo[a];
    const double extent = centroid_bounds.hi[a] - lo;
    if (extent <= 0.0) continue;
    std::array<Bin, kBins> bins{};
    for (std::uint32_t i = begin; i < end; ++i) {
      const std::uint32_t prim = prim_ids_[i];
      const int b = std::clamp(static_cast<int>(kBins * (centroids[prim][a] - lo) / extent), 0, kBins - 1);
      bins[b].box.expand(boxes[prim]);
      ++bins[b].count;
    }
    std::array<double, kBins - 1> cost{};
    Aabb left;
    std::uint32_t left_count = 0;
    for (int k = 0; k < kBins - 1; ++k) {
      left.expand(bins[k].box);
      left_count += bins[k].count;
      cost[k] = left_count * left.surface_area();
    }
    Aabb right;
    std::uint32_t right_count = 0;
    for (int k = kBins - 1; k > 0; --k) {
      right.expand(bins[k].box);
      right_count += bins[k].count;
      cost[k - 1] += right_count * right.surface_area();
    }
    for (int k = 0; k < kBins - 1; ++k)
      if (cost[k] < best_cost) {
        best_cost = cost[k];
        best_axis = a;
        best_split = k;
      }
  }
  std::uint32_t mid = begin + count / 2;
  if (best_axis >= 0) {
    const double leaf_cost = count * bounds.surface_area();
    if (count <= 16 && best_cost >= leaf_cost) return make_leaf();
    axis = best_axis;
    const double lo = centroid_bounds.lo[axis];
    const double extent = centroid_bounds.hi[axis] - lo;
    const auto split = std::partition(prim_ids_.begin() + begin, prim_ids_.begin() + end, [&](std::uint32_t prim) {
      return std::clamp(static_cast<int>(kBins * (centroids[prim][axis] - lo) / extent), 0, kBins - 1) <= best_split;
    });
    mid = static_cast<std::uint32_t>(split - prim_ids_.begin());
    if (mid == begin || mid == end) mid = begin + count / 2;
  }

  nodes_[index].axis = static_cast<std::uint8_t>(axis);
  build(begin, mid, boxes, centroids);
  nodes_[index].offset = build(mid, end, boxes, centroids);
  return index;
}

bool AccelStructure::intersect_triangle(std::uint32_t prim, const Vec3& o, const Vec3& d, double tmin,
                                        double tmax, double& t_out) const {
  const TriPlane& pl = planes_[prim];
  const double denom = dot(pl.n, d);
  if (denom == 0.0) return false;
  const double t = (pl.w - dot(pl.n, o)) / denom;
  if (!(t > tmin) || !(t < tmax)) return false;
  const TriEdges& tri = edges_[prim];
  const Vec3 q = o + d * t - tri.v0;  // hit point relative to v0
  const double u = dot(q, tri.a1);
  if (u < -kEdgeSlack || u > 1.0 + kEdgeSlack) return false;
  const double v = dot(q, tri.a2);
  if (v < -kEdgeSlack || u + v > 1.0 + kEdgeSlack) return false;
  t_out = t;
  return true;
}

Hit AccelStructure::make_hit(std::uint32_t triangle, double t, const Vec3& origin, const Vec3& dir) const {
  Hit hit;
  hit.t = t;
  hit.triangle = triangle;
  hit.position = origin + dir * t;
  hit.normal = facing_normal(triangle, dir);
  hit.cls = scene_.triangle_class(triangle);
  return hit;
}

Vec3 AccelStructure::facing_normal(std::uint32_t triangle, const Vec3& incoming_dir) const {
  const Vec3& n = scene_.triangle_normal(triangle);
  return dot(n, incoming_dir) > 0.0 ? -n : n;
}

std::optional<Hit> AccelStructure::closest_hit(const Vec3& origin, const Vec3& dir, double tmin,
                                               double tmax) const {
  std::uint32_t best = 0;
  bool found = false;
  double limit = tmax;
  traverse(origin, dir, tmin, limit, [&](std::uint32_t prim, double& current_max) {
    double t = 0.0;
    if (intersect_triangle(prim, origin, dir, tmin, current_max, t)) {
      current_max = t;
      best = prim;
      found = true;
    }
    return true;
  });
  if (!found) return std::nullopt;
  return make_hit(prim_ids_[best], limit, origin, dir);
}

bool AccelStructure::occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const {
  bool hit = false;
  double limit = tmax;
  traverse(origin, dir, tmin, limit, [&](std::uint32_t prim, double& current_max) {
    double t = 0.0;
    if (intersect_triangle(prim, origin, dir, tmin, current_max, t)) {
      hit = true;
      return false;
    }
    return true;
  });
  return hit;
}

std::optional<Hit> AccelStructure::closest_hit_brute_force(const Vec3& origin, const Vec3& dir,
                                                           double tmin, double tmax) const {
  bool found = false;
  std::uint32_t best = 0;
  double limit = tmax;
  for (std::uint32_t prim = 0; prim < planes_.size(); ++prim) {
    double t = 0.0;
    if (intersect_triangle(prim, origin, dir, tmin, limit, t)) {
      limit = t;
      best = prim;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return make_hit(prim_ids_[best], limit, origin, dir);
}

std::optional<Hit> cast_ray(const AccelStructure& accel, const Vec3& origin, const Vec3& dir) {
  return accel.closest_hit(origin, dir, kRayEpsilon);
}

}  // namespace echonav
