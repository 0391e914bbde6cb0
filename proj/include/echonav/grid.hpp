#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "echonav/accel.hpp"

namespace echonav {

/// Retained source/listener positions. Sources and listeners share one node set.
struct NodeGrid {
  std::vector<Vec3> nodes;
  double resolution = 0.5;
  double height = 1.5;
  std::vector<double> closedness;
  /// Shortest initial-ray hit distance seen while measuring closedness.
  std::vector<double> clearance;
};

/// Regular square lattice over the scene footprint, including the bounding-box edges:
/// floor(extent / resolution) + 1 points per axis at z = bounds.lo.z + height.
/// Throws ValidationError for resolution <= 0; returns an empty list when the height lies
/// outside the scene's vertical extent.
std::vector<Vec3> place_candidates(const Scene& scene, double resolution, double height);

struct ClosednessSample {
  double closedness = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
};

/// C = H / (R * B): R uniform rays, each followed through up to B cosine-diffuse bounces. An
/// escaping ray ends its chain and its remaining bounces count as misses.
ClosednessSample measure_closedness(const AccelStructure& accel, const Vec3& point, int rays,
                                    int bounces, std::uint64_t seed);

double closedness(const AccelStructure& accel, const Vec3& point, int rays, int bounces,
                  std::uint64_t seed);

struct PruneOptions {
  int rays = 1000;
  int bounces = 10;
  double c_min = 0.5;
  double d_min = 0.05;
  std::uint64_t seed = 0;
  double resolution = 0.5;
  double height = 1.5;
  int threads = 0;
};

/// Keeps candidates with C >= c_min and clearance >= d_min. Candidate k uses the RNG stream
/// derived from (seed, k), so results do not depend on the thread count.
NodeGrid prune(const std::vector<Vec3>& candidates, const AccelStructure& accel,
               const PruneOptions& options);

/// Undirected 4-connected lattice graph over grid nodes.
class NavGraph {
 public:
  NavGraph() = default;
  NavGraph(std::vector<Vec3> nodes, std::vector<std::pair<std::uint32_t, std::uint32_t>> edges,
           double resolution, double height);

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  const Vec3& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges() const { return edges_; }
  const std::vector<std::uint32_t>& neighbors(std::size_t i) const { return adjacency_.at(i); }
  double resolution() const { return resolution_; }
  double height() const { return height_; }

  bool has_edge(std::size_t i, std::size_t j) const;

  /// Neighbor reached by one step along ground-plane direction (dx, dy), if that edge exists.
  std::optional<std::uint32_t> neighbor_toward(std::size_t i, double dx, double dy) const;

  /// Node within `tolerance` of `p` in the ground plane.
  std::optional<std::uint32_t> find_node(const Vec3& p, double tolerance = 1e-6) const;

  /// BFS hop counts from `source`; -1 marks unreachable nodes.
  const std::vector<int>& hops_from(std::size_t source) const;

  /// Connected-component label per node.
  std::vector<int> components() const;

 private:
  std::vector<Vec3> nodes_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges_;
  std::vector<std::vector<std::uint32_t>> adjacency_;
  double resolution_ = 0.5;
  double height_ = 1.5;
  std::vector<int> bfs(std::size_t source) const;

  std::vector<std::vector<int>> hop_cache_;
};

/// Perpendicular offsets of the parallel segment casts used for edge obstruction (0.2 m agent).
inline constexpr double kAgentHalfWidth = 0.1;

/// True when all three segment casts from a to b (centerline and +-kAgentHalfWidth sideways) are
/// free of geometry.
bool segment_clear(const AccelStructure& accel, const Vec3& a, const Vec3& b);

NavGraph build_nav_graph(const NodeGrid& grid, const AccelStructure& accel);

/// Hop count times resolution, or +infinity if i and j are disconnected.
double geodesic_distance(const NavGraph& graph, std::size_t i, std::size_t j);

/// Graph JSON: { "resolution", "height", "nodes": [[x,y,z],...], "edges": [[i,j],...] }.
std::string graph_to_json(const NavGraph& graph);
NavGraph parse_graph(const std::string& json_text);
void save_graph(const NavGraph& graph, const std::filesystem::path& path);
NavGraph load_graph(const std::filesystem::path& path);

}  // namespace echonav
