#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "echonav/geometry.hpp"

namespace echonav {

using Triangle = std::array<std::uint32_t, 3>;

/// Triangle mesh with one semantic class label per triangle. Coordinates are meters, z up.
///
/// Instances are validated on construction and immutable afterwards. Per-triangle unit normals
/// follow the winding order (counter-clockwise seen from the normal side).
class Scene {
 public:
  Scene() = default;

  /// Throws ValidationError on out-of-range indices, degenerate triangles, size mismatch or an
  /// empty class label.
  Scene(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
        std::vector<std::string> classes);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const Aabb& bounds() const { return bounds_; }

  std::size_t triangle_count() const { return triangles_.size(); }
  const std::string& triangle_class(std::size_t i) const { return classes_[i]; }
  const Vec3& triangle_normal(std::size_t i) const { return normals_[i]; }
  double triangle_area(std::size_t i) const { return areas_[i]; }
  Vec3 vertex(std::size_t tri, int corner) const { return vertices_[triangles_[tri][corner]]; }

  bool has_class(const std::string& cls) const;

  /// Returns a copy with two ceiling-class triangles capping the top face of the bounding box.
  Scene with_ceiling_cap(const std::string& ceiling_class = "ceiling") const;

  /// Appends the triangles of `other` (used to assemble fixtures).
  Scene merged(const Scene& other) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<std::string> classes_;
  std::vector<Vec3> normals_;
  std::vector<double> areas_;
  Aabb bounds_;
};

struct LoadOptions {
  /// Cap scenes that have no ceiling-class triangle with a ceiling at the bounding-box top.
  bool cap_missing_ceiling = false;
  std::string ceiling_class = "ceiling";
};

/// Parses the scene JSON form { "vertices": [[x,y,z],...], "triangles": [[i,j,k],...],
/// "classes": [...] }. Throws ParseError or ValidationError.
Scene load_scene(const std::filesystem::path& path, const LoadOptions& options = {});
Scene parse_scene(const std::string& json_text, const LoadOptions& options = {});
void save_scene(const Scene& scene, const std::filesystem::path& path);
std::string scene_to_json(const Scene& scene);

struct ShoeboxOptions {
  std::string floor_class = "floor";
  std::string wall_class = "wall";
  std::string ceiling_class = "ceiling";
  /// Cut a 1 m wide, 2 m tall opening (from the floor, centered in x) into the y = 0 wall.
  bool doorway = false;
  /// Minimum corner of the box.
  Vec3 origin{};
};

/// Closed axis-aligned box [origin, origin + dims] with inward-facing normals.
/// Throws ValidationError for non-positive dimensions.
Scene generate_shoebox(const Vec3& dims, const ShoeboxOptions& options = {});

namespace fixtures {

/// Two rooms sharing the wall x = 2.5: room A is [0,2.5]x[0,3.5], room B is [2.5,5.5]x[0,3],
/// both 3 m tall, joined by a 1 m wide, 2 m tall doorway at y in [1,2]. At 0.5 m resolution
/// and 1.5 m height the node grid has 24 + 25 + 1 (doorway) nodes.
Scene two_room();

/// Straight corridor 1 m wide whose 0.5 m lattice interior holds `nodes` nodes on one line.
Scene corridor(int nodes);

}  // namespace fixtures

}  // namespace echonav
