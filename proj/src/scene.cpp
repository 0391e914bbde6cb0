#include "echonav/scene.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "echonav/errors.hpp"

namespace echonav {

namespace {

constexpr double kMinTriangleArea = 1e-12;

class MeshBuilder {
 public:
  /// Axis-aligned rectangle on the plane `axis = coord`, spanning [u0,u1]x[v0,v1] in the two
  /// remaining axes (cyclic order). The normal points along +axis when `sign` > 0.
  void rect(int axis, double coord, double u0, double u1, double v0, double v1, int sign,
            const std::string& cls) {
    const int ua = (axis + 1) % 3;
    const int va = (axis + 2) % 3;
    auto point = [&](double u, double v) {
      Vec3 p;
      p[axis] = coord;
      p[ua] = u;
      p[va] = v;
      return p;
    };
    const auto base = static_cast<std::uint32_t>(vertices.size());
    vertices.push_back(point(u0, v0));
    vertices.push_back(point(u1, v0));
    vertices.push_back(point(u1, v1));
    vertices.push_back(point(u0, v1));
    if (sign > 0) {
      triangles.push_back({base, base + 1, base + 2});
      triangles.push_back({base, base + 2, base + 3});
    } else {
      triangles.push_back({base, base + 2, base + 1});
      triangles.push_back({base, base + 3, base + 2});
    }
    classes.push_back(cls);
    classes.push_back(cls);
  }

  Scene build() { return Scene(std::move(vertices), std::move(triangles), std::move(classes)); }

  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<std::string> classes;
};

Vec3 parse_point(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("vertex must be an array of 3 numbers");
  for (const auto& c : j)
    if (!c.is_number()) throw ParseError("vertex coordinate is not a number");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Scene::Scene(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
             std::vector<std::string> classes)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), classes_(std::move(classes)) {
  if (triangles_.size() != classes_.size())
    throw ValidationError("triangle and class counts differ (" + std::to_string(triangles_.size()) +
                          " vs " + std::to_string(classes_.size()) + ")");
  for (const Vec3& v : vertices_) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw ValidationError("non-finite vertex coordinate");
    bounds_.expand(v);
  }
  normals_.reserve(triangles_.size());
  areas_.reserve(triangles_.size());
  for (std::size_t i = 0; i < triangles_.size(); ++i) {
    for (std::uint32_t idx : triangles_[i]) {
      if (idx >= vertices_.size())
        throw ValidationError("triangle " + std::to_string(i) + " references vertex " +
                              std::to_string(idx) + " of " + std::to_string(vertices_.size()));
    }
    if (classes_[i].empty()) throw ValidationError("triangle " + std::to_string(i) + " has no class");
    const Vec3 n = cross(vertex(i, 1) - vertex(i, 0), vertex(i, 2) - vertex(i, 0));
    const double area = 0.5 * length(n);
    if (!(area > kMinTriangleArea))
      throw ValidationError("triangle " + std::to_string(i) + " is degenerate");
    normals_.push_back(normalize(n));
    areas_.push_back(area);
  }
}

bool Scene::has_class(const std::string& cls) const {
  return std::find(classes_.begin(), classes_.end(), cls) != classes_.end();
}

Scene Scene::with_ceiling_cap(const std::string& ceiling_class) const {
  if (bounds_.empty()) return *this;
  MeshBuilder b;
  b.vertices = vertices_;
  b.triangles = triangles_;
  b.classes = classes_;
  // Plane z = top, normal facing down into the scene.
  b.rect(2, bounds_.hi.z, bounds_.lo.x, bounds_.hi.x, bounds_.lo.y, bounds_.hi.y, -1, ceiling_class);
  return b.build();
}

Scene Scene::merged(const Scene& other) const {
  std::vector<Vec3> v = vertices_;
  std::vector<Triangle> t = triangles_;
  std::vector<std::string> c = classes_;
  const auto offset = static_cast<std::uint32_t>(v.size());
  v.insert(v.end(), other.vertices_.begin(), other.vertices_.end());
  for (Triangle tri : other.triangles_) t.push_back({tri[0] + offset, tri[1] + offset, tri[2] + offset});
  c.insert(c.end(), other.classes_.begin(), other.classes_.end());
  return Scene(std::move(v), std::move(t), std::move(c));
}

Scene parse_scene(const std::string& json_text, const LoadOptions& options) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scene JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("vertices") || !j.contains("triangles") || !j.contains("classes"))
    throw ParseError("scene JSON needs \"vertices\", \"triangles\" and \"classes\"");
  const auto& jv = j["vertices"];
  const auto& jt = j["triangles"];
  const auto& jc = j["classes"];
  if (!jv.is_array() || !jt.is_array() || !jc.is_array())
    throw ParseError("scene fields must be arrays");

  std::vector<Vec3> vertices;
  vertices.reserve(jv.size());
  for (const auto& p : jv) vertices.push_back(parse_point(p));

  std::vector<Triangle> triangles;
  triangles.reserve(jt.size());
  for (const auto& t : jt) {
    if (!t.is_array() || t.size() != 3) throw ParseError("triangle must be an array of 3 indices");
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      if (!t[k].is_number_integer()) throw ParseError("triangle index is not an integer");
      const auto idx = t[k].get<std::int64_t>();
      if (idx < 0 || idx > std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("triangle index " + std::to_string(idx) + " out of range");
      tri[k] = static_cast<std::uint32_t>(idx);
    }
    triangles.push_back(tri);
  }

  std::vector<std::string> classes;
  classes.reserve(jc.size());
  for (const auto& c : jc) {
    if (!c.is_string()) throw ParseError("class label is not a string");
    classes.push_back(c.get<std::string>());
  }

  Scene scene(std::move(vertices), std::move(triangles), std::move(classes));
  if (options.cap_missing_ceiling && !scene.has_class(options.ceiling_class))
    return scene.with_ceiling_cap(options.ceiling_class);
  return scene;
}

Scene load_scene(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), options);
}

std::string scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const Vec3& v : scene.vertices()) j["vertices"].push_back({v.x, v.y, v.z});
  j["triangles"] = nlohmann::json::array();
  for (const Triangle& t : scene.triangles()) j["triangles"].push_back({t[0], t[1], t[2]});
  j["classes"] = scene.classes();
  return j.dump();
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw StorageError("cannot write scene file " + path.string());
  out << scene_to_json(scene) << '\n';
}

Scene generate_shoebox(const Vec3& dims, const ShoeboxOptions& options) {
  if (!(dims.x > 0.0) || !(dims.y > 0.0) || !(dims.z > 0.0))
    throw ValidationError("shoebox dimensions must be positive");
  const Vec3 lo = options.origin;
  const Vec3 hi = options.origin + dims;
  MeshBuilder b;
  b.rect(2, lo.z, lo.x, hi.x, lo.y, hi.y, +1, options.floor_class);
  b.rect(2, hi.z, lo.x, hi.x, lo.y, hi.y, -1, options.ceiling_class);
  // x walls: u = y, v = z
  b.rect(0, lo.x, lo.y, hi.y, lo.z, hi.z, +1, options.wall_class);
  b.rect(0, hi.x, lo.y, hi.y, lo.z, hi.z, -1, options.wall_class);
  // y walls: u = z, v = x
  b.rect(1, hi.y, lo.z, hi.z, lo.x, hi.x, -1, options.wall_class);
  if (!options.doorway) {
    b.rect(1, lo.y, lo.z, hi.z, lo.x, hi.x, +1, options.wall_class);
  } else {
    const double door_w = 1.0;
    const double door_h = 2.0;
    if (dims.x <= door_w || dims.z <= door_h)
      throw ValidationError("shoebox too small for a 1 x 2 m doorway");
    const double cx = lo.x + 0.5 * dims.x;
    const double d0 = cx - 0.5 * door_w;
    const double d1 = cx + 0.5 * door_w;
    const double top = lo.z + door_h;
    b.rect(1, lo.y, lo.z, hi.z, lo.x, d0, +1, options.wall_class);
    b.rect(1, lo.y, lo.z, hi.z, d1, hi.x, +1, options.wall_class);
    b.rect(1, lo.y, top, hi.z, d0, d1, +1, options.wall_class);
  }
  return b.build();
}

namespace fixtures {

Scene two_room() {
  constexpr double h = 3.0;
  MeshBuilder b;
  // Room A: [0,2.5] x [0,3.5]
  b.rect(2, 0.0, 0.0, 2.5, 0.0, 3.5, +1, "floor");
  b.rect(2, h, 0.0, 2.5, 0.0, 3.5, -1, "ceiling");
  b.rect(0, 0.0, 0.0, 3.5, 0.0, h, +1, "wall");
  b.rect(1, 0.0, 0.0, h, 0.0, 2.5, +1, "wall");
  b.rect(1, 3.5, 0.0, h, 0.0, 2.5, -1, "wall");
  b.rect(0, 2.5, 3.0, 3.5, 0.0, h, -1, "wall");
  // Room B: [2.5,5.5] x [0,3]
  b.rect(2, 0.0, 2.5, 5.5, 0.0, 3.0, +1, "floor");
  b.rect(2, h, 2.5, 5.5, 0.0, 3.0, -1, "ceiling");
  b.rect(0, 5.5, 0.0, 3.0, 0.0, h, -1, "wall");
  b.rect(1, 0.0, 0.0, h, 2.5, 5.5, +1, "wall");
  b.rect(1, 3.0, 0.0, h, 2.5, 5.5, -1, "wall");
  // Shared wall x = 2.5 with the doorway y in [1,2], z in [0,2].
  b.rect(0, 2.5, 0.0, 1.0, 0.0, h, -1, "wall");
  b.rect(0, 2.5, 2.0, 3.0, 0.0, h, -1, "wall");
  b.rect(0, 2.5, 1.0, 2.0, 2.0, h, -1, "wall");
  return b.build();
}

Scene corridor(int nodes) {
  if (nodes < 1) throw ValidationError("corridor needs at least one node");
  return generate_shoebox({0.5 * (nodes + 1), 1.0, 3.0});
}

}  // namespace fixtures

}  // namespace echonav
