#include "echonav/grid.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "echonav/errors.hpp"
#include "echonav/parallel.hpp"
#include "echonav/random.hpp"

namespace echonav {

std::vector<Vec3> place_candidates(const Scene& scene, double resolution, double height) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw ValidationError("grid resolution must be > 0");
  const Aabb& b = scene.bounds();
  const double z = b.lo.z + height;
  if (b.empty() || z < b.lo.z || z > b.hi.z) return {};
  // Small slack so extents that are exact multiples of the resolution keep their last column.
  const auto count = [&](double extent) {
    return static_cast<int>(std::floor(extent / resolution + 1e-9)) + 1;
  };
  const int nx = count(b.hi.x - b.lo.x);
  const int ny = count(b.hi.y - b.lo.y);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out.push_back({b.lo.x + i * resolution, b.lo.y + j * resolution, z});
  return out;
}

ClosednessSample measure_closedness(const AccelStructure& accel, const Vec3& point, int rays,
                                    int bounces, std::uint64_t seed) {
  if (rays < 1 || bounces < 1) throw ValidationError("closedness needs R >= 1 and B >= 1");
  Rng rng(seed);
  ClosednessSample out;
  std::uint64_t hits = 0;
  for (int r = 0; r < rays; ++r) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    Vec3 dir = sample_uniform_sphere(u1, u2);
    Vec3 origin = point;
    for (int b = 0; b < bounces; ++b) {
      // The first segment starts slightly behind the point so that points lying on a surface
      // report zero clearance instead of skipping that surface.
      const auto hit = accel.closest_hit(origin, dir, b == 0 ? -1e-6 : 0.0);
      if (!hit) break;
      ++hits;
      if (b == 0) out.nearest = std::min(out.nearest, std::max(0.0, hit->t));
      const double v1 = rng.uniform();
      const double v2 = rng.uniform();
      dir = sample_cosine_hemisphere(hit->normal, v1, v2);
      origin = offset_origin(hit->position, hit->normal);
    }
  }
  out.closedness = static_cast<double>(hits) / (static_cast<double>(rays) * bounces);
  return out;
}

double closedness(const AccelStructure& accel, const Vec3& point, int rays, int bounces,
                  std::uint64_t seed) {
  return measure_closedness(accel, point, rays, bounces, seed).closedness;
}

NodeGrid prune(const std::vector<Vec3>& candidates, const AccelStructure& accel,
               const PruneOptions& options) {
  std::vector<ClosednessSample> samples(candidates.size());
  parallel_for(candidates.size(), options.threads, [&](std::size_t k) {
    samples[k] = measure_closedness(accel, candidates[k], options.rays, options.bounces,
                                    derive_seed(options.seed, {0x677269640000ULL, k}));
  });
  NodeGrid grid;
  grid.resolution = options.resolution;
  grid.height = options.height;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (samples[k].closedness < options.c_min || samples[k].nearest < options.d_min) continue;
    grid.nodes.push_back(candidates[k]);
    grid.closedness.push_back(samples[k].closedness);
    grid.clearance.push_back(samples[k].nearest);
  }
  return grid;
}

NavGraph::NavGraph(std::vector<Vec3> nodes,
                   std::vector<std::pair<std::uint32_t, std::uint32_t>> edges, double resolution,
                   double height)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), resolution_(resolution), height_(height) {
  if (!(resolution_ > 0.0)) throw ValidationError("graph resolution must be > 0");
  adjacency_.assign(nodes_.size(), {});
  for (auto& [i, j] : edges_) {
    if (i >= nodes_.size() || j >= nodes_.size() || i == j)
      throw ValidationError("graph edge (" + std::to_string(i) + "," + std::to_string(j) +
                            ") is invalid");
    if (i > j) std::swap(i, j);
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  // All-pairs hop counts up front keep the graph immutable and shareable across threads.
  hop_cache_.resize(nodes_.size());
  for (std::size_t s = 0; s < nodes_.size(); ++s) hop_cache_[s] = bfs(s);
}

bool NavGraph::has_edge(std::size_t i, std::size_t j) const {
  for (std::uint32_t n : adjacency_.at(i))
    if (n == j) return true;
  return false;
}

std::optional<std::uint32_t> NavGraph::neighbor_toward(std::size_t i, double dx, double dy) const {
  const Vec3& p = nodes_.at(i);
  for (std::uint32_t n : adjacency_[i]) {
    const Vec3 d = (nodes_[n] - p) / resolution_;
    if (d.x * dx + d.y * dy > 0.9) return n;
  }
  return std::nullopt;
}

std::optional<std::uint32_t> NavGraph::find_node(const Vec3& p, double tolerance) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (std::hypot(nodes_[i].x - p.x, nodes_[i].y - p.y) <= tolerance)
      return static_cast<std::uint32_t>(i);
  return std::nullopt;
}

const std::vector<int>& NavGraph::hops_from(std::size_t source) const { return hop_cache_.at(source); }

std::vector<int> NavGraph::bfs(std::size_t source) const {
  std::vector<int> hops(nodes_.size(), -1);
  std::deque<std::uint32_t> queue{static_cast<std::uint32_t>(source)};
  hops[source] = 0;
  while (!queue.empty()) {
    const std::uint32_t u = queue.front();
    queue.pop_front();
    for (std::uint32_t v : adjacency_[u])
      if (hops[v] < 0) {
        hops[v] = hops[u] + 1;
        queue.push_back(v);
      }
  }
  return hops;
}

std::vector<int> NavGraph::components() const {
  std::vector<int> label(nodes_.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < nodes_.size(); ++s) {
    if (label[s] >= 0) continue;
    std::deque<std::uint32_t> queue{static_cast<std::uint32_t>(s)};
    label[s] = next;
    while (!queue.empty()) {
      const std::uint32_t u = queue.front();
      queue.pop_front();
      for (std::uint32_t v : adjacency_[u])
        if (label[v] < 0) {
          label[v] = next;
          queue.push_back(v);
        }
    }
    ++next;
  }
  return label;
}

bool segment_clear(const AccelStructure& accel, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double len = length(d);
  if (len <= 0.0) return true;
  const Vec3 dir = d / len;
  const Vec3 side = normalize(cross(dir, Vec3{0.0, 0.0, 1.0}));
  for (double offset : {0.0, -kAgentHalfWidth, kAgentHalfWidth}) {
    if (accel.occluded(a + side * offset, dir, 0.0, len)) return false;
  }
  return true;
}

NavGraph build_nav_graph(const NodeGrid& grid, const AccelStructure& accel) {
  const double res = grid.resolution;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  const std::size_t n = grid.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec3 d = grid.nodes[j] - grid.nodes[i];
      const double ax = std::abs(d.x), ay = std::abs(d.y), az = std::abs(d.z);
      const double tol = 1e-6 * res;
      const bool adjacent = az <= tol && ((std::abs(ax - res) <= tol && ay <= tol) ||
                                          (std::abs(ay - res) <= tol && ax <= tol));
      if (!adjacent) continue;
      if (segment_clear(accel, grid.nodes[i], grid.nodes[j]))
        edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }
  return NavGraph(grid.nodes, std::move(edges), res, grid.height);
}

double geodesic_distance(const NavGraph& graph, std::size_t i, std::size_t j) {
  const int hops = graph.hops_from(i).at(j);
  if (hops < 0) return std::numeric_limits<double>::infinity();
  return hops * graph.resolution();
}

std::string graph_to_json(const NavGraph& graph) {
  nlohmann::json j;
  j["resolution"] = graph.resolution();
  j["height"] = graph.height();
  j["nodes"] = nlohmann::json::array();
  for (const Vec3& p : graph.nodes()) j["nodes"].push_back({p.x, p.y, p.z});
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : graph.edges()) j["edges"].push_back({a, b});
  return j.dump();
}

NavGraph parse_graph(const std::string& json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    std::vector<Vec3> nodes;
    for (const auto& p : j.at("nodes")) {
      if (!p.is_array() || p.size() != 3) throw ParseError("graph node must be [x,y,z]");
      nodes.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ParseError("graph edge must be [i,j]");
      edges.emplace_back(e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>());
    }
    return NavGraph(std::move(nodes), std::move(edges), j.at("resolution").get<double>(),
                    j.at("height").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph JSON: ") + e.what());
  }
}

void save_graph(const NavGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw StorageError("cannot write " + path.string());
  out << graph_to_json(graph) << '\n';
  if (!out) throw StorageError("write failed for " + path.string());
}

NavGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_graph(ss.str());
}

}  // namespace echonav
