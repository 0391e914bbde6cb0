#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "echonav/acoustics.hpp"
#include "echonav/scene.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace echonav;
using testing_support::flat_material;

namespace {

const ERCluster* direct_cluster(const std::vector<ERCluster>& clusters) {
  for (const ERCluster& c : clusters)
    if (c.order() == 0) return &c;
  return nullptr;
}

std::vector<ERCluster> clusters_for(const AcousticScene& scene, const Vec3& src, const Vec3& lst,
                                    const SimParams& p) {
  const SourcePathCache cache = trace_source_subpaths(scene, src, 0, p);
  const ConnectionResult r = connect_and_accumulate(scene, lst, 1, cache, p);
  return cluster_early_reflections(r.early, scene);
}

SimParams light_params() {
  SimParams p;
  p.rays_per_source = 2000;
  p.rays_per_listener = 500;
  p.connection_paths = 50;
  return p;
}

Scene wall_at_x1() {
  std::vector<Vec3> v{{1, -5, -5}, {1, 5, -5}, {1, 5, 5}, {1, -5, 5}};
  return Scene(v, {{0, 1, 2}, {0, 2, 3}}, {"wall", "wall"});
}

}  // namespace

TEST_CASE("direct arrival delay is distance * fs / c") {
  const AccelStructure accel{Scene{}};
  const AcousticScene scene(accel, flat_material(0.3, 0.0));
  const auto clusters = clusters_for(scene, {0, 0, 0}, {2, 0, 0}, light_params());
  REQUIRE(clusters.size() == 1u);
  CHECK(std::lround(clusters[0].delay) == 257);  // 2 * 44100 / 343 = 257.1
  CHECK(clusters[0].energy[0] == doctest::Approx(1.0 / (4.0 * kPi * 4.0)));
}

TEST_CASE("direct energy follows the inverse-square law") {
  const AccelStructure accel{Scene{}};
  const AcousticScene scene(accel, flat_material(0.3, 0.0));
  double e[3];
  const double d[3] = {1, 2, 4};
  for (int i = 0; i < 3; ++i) {
    const auto clusters = clusters_for(scene, {0, 0, 0}, {d[i], 0, 0}, light_params());
    REQUIRE(direct_cluster(clusters));
    e[i] = direct_cluster(clusters)->energy[1];
  }
  CHECK(e[0] / e[1] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(e[0] / e[2] == doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("small distances are clamped at min_distance") {
  const AccelStructure accel{Scene{}};
  const AcousticScene scene(accel, flat_material(0.3, 0.0));
  const auto clusters = clusters_for(scene, {0, 0, 0}, {0.01, 0, 0}, light_params());
  REQUIRE(direct_cluster(clusters));
  CHECK(direct_cluster(clusters)->energy[0] == doctest::Approx(1.0 / (4.0 * kPi * 0.01)));
}

TEST_CASE("an opaque wall removes the direct path") {
  const AccelStructure accel(wall_at_x1());
  const AcousticScene opaque(accel, flat_material(0.3, 0.0, 0.0));
  CHECK(direct_cluster(clusters_for(opaque, {0, 0, 0}, {2, 0, 0}, light_params())) == nullptr);
  const AmbisonicIR ir = compute_rir_pair(opaque, {0, 0, 0}, 0, {2, 0, 0}, 1, light_params());
  for (float v : ir.samples) CHECK(v == 0.0f);

  // A partially transmitting wall scales the direct energy by its transmission coefficient.
  const AcousticScene thin(accel, flat_material(0.3, 0.0, 0.25));
  const auto through = clusters_for(thin, {0, 0, 0}, {2, 0, 0}, light_params());
  REQUIRE(direct_cluster(through));
  CHECK(direct_cluster(through)->energy[2] == doctest::Approx(0.25 / (4.0 * kPi * 4.0)));
}

TEST_CASE("open space has only the direct cluster") {
  const AccelStructure accel{Scene{}};
  const AcousticScene scene(accel, flat_material(0.3, 0.5));
  CHECK(clusters_for(scene, {0, 0, 0}, {3, 1, 0}, light_params()).size() == 1u);
  const ConnectionResult r =
      connect_and_accumulate(scene, {3, 1, 0}, 1, trace_source_subpaths(scene, {0, 0, 0}, 0, light_params()),
                             light_params());
  CHECK(r.histogram.length() == 0u);
}

TEST_CASE("shoebox early reflections match the image-source oracle") {
  const double room[3] = {10, 8, 3};
  const double s[3] = {2.0, 3.0, 1.4};
  const double l[3] = {7.5, 5.0, 1.6};
  const AccelStructure accel(generate_shoebox({room[0], room[1], room[2]}));
  const AcousticScene scene(accel, flat_material(0.3, 0.0));
  const SimParams p = light_params();
  const auto clusters = clusters_for(scene, {s[0], s[1], s[2]}, {l[0], l[1], l[2]}, p);

  const auto images = oracle::shoebox_images(room, s, 2);
  std::vector<double> expected[3];
  for (const auto& im : images) {
    const double dist = std::sqrt((im.x - l[0]) * (im.x - l[0]) + (im.y - l[1]) * (im.y - l[1]) +
                                  (im.z - l[2]) * (im.z - l[2]));
    expected[im.order].push_back(dist * p.sample_rate / p.speed_of_sound);
  }
  CHECK(expected[1].size() == 6u);
  CHECK(expected[2].size() == 18u);

  std::vector<double> got[3];
  for (const ERCluster& c : clusters) {
    REQUIRE(c.order() <= 2);
    got[c.order()].push_back(c.delay);
  }
  for (int k = 0; k <= 2; ++k) {
    REQUIRE(got[k].size() == expected[k].size());
    std::sort(got[k].begin(), got[k].end());
    std::sort(expected[k].begin(), expected[k].end());
    for (std::size_t i = 0; i < got[k].size(); ++i) CHECK(std::abs(got[k][i] - expected[k][i]) <= 1.0);
  }

  // Each order-1 image carries the wall reflectance on top of spherical spreading.
  for (const ERCluster& c : clusters) {
    if (c.order() != 1) continue;
    const double dist = c.delay * p.speed_of_sound / p.sample_rate;
    CHECK(c.energy[0] == doctest::Approx(0.7 / (4.0 * kPi * dist * dist)).epsilon(1e-6));
  }
}

TEST_CASE("arrival directions point from the listener toward the source") {
  const AccelStructure accel{Scene{}};
  const AcousticScene scene(accel, flat_material(0.3, 0.0));
  const auto clusters = clusters_for(scene, {3, 0, 0}, {0, 0, 0}, light_params());
  REQUIRE(clusters.size() == 1u);
  CHECK(clusters[0].direction.x == doctest::Approx(1.0));
  const ShArray y = sh_encode(clusters[0].direction);
  CHECK(y[3] == doctest::Approx(1.0));  // ACN 3 is the X dipole
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx(0.0));
}

TEST_CASE("diffuse walls feed the late histogram") {
  const AccelStructure accel(generate_shoebox({6, 5, 3}));
  const AcousticScene scene(accel, flat_material(0.2, 0.7));
  const SimParams p = light_params();
  const ConnectionResult r =
      connect_and_accumulate(scene, {4, 3, 1.5}, 1, trace_source_subpaths(scene, {1, 1, 1.5}, 0, p), p);
  REQUIRE(r.histogram.length() > 0u);
  for (int b = 0; b < kBandCount; ++b) CHECK(r.histogram.total_energy(b) > 0.0);
  // Histogram arrivals are at least third order, so they cannot precede the direct path.
  const double direct = length(Vec3{3, 2, 0}) * p.sample_rate / p.speed_of_sound;
  std::size_t first = 0;
  while (first < r.histogram.length() && r.histogram.at(first, 1, 0) == 0.0) ++first;
  CHECK(static_cast<double>(first) >= direct);
}

namespace {

AcousticScene opaque_two_room(const AccelStructure& accel) {
  MaterialDb db = MaterialDb::defaults();
  db.add_material({"opaque wall", {0.29, 0.08, 0.05, 0.08}, {0.10, 0.10, 0.15, 0.20}, {0, 0, 0, 0}});
  db.map_class("wall", "opaque wall");
  return AcousticScene(accel, db);
}

/// Earliest arrival (samples) over early contributions and the late histogram.
double first_arrival(const ConnectionResult& r) {
  double first = std::numeric_limits<double>::infinity();
  for (const ERContribution& e : r.early) first = std::min(first, e.delay);
  for (std::size_t b = 0; b < r.histogram.length(); ++b)
    if (r.histogram.at(b, 0, 0) > 0.0) {
      first = std::min(first, static_cast<double>(b));
      break;
    }
  return first;
}

}  // namespace

TEST_CASE("sound reaches the other room only through the doorway") {
  const AccelStructure accel(fixtures::two_room());
  const AcousticScene scene = opaque_two_room(accel);
  const SimParams p = light_params();
  const double to_samples = p.sample_rate / p.speed_of_sound;

  SUBCASE("listener behind the partition") {
    // Shortest route bends round the door jamb at (2.5, 1.0); reflections can only arrive later.
    const Vec3 s{2.0, 0.5, 1.5}, l{3.0, 0.5, 1.5};
    const ConnectionResult r = connect_and_accumulate(scene, l, 1, trace_source_subpaths(scene, s, 0, p), p);
    const double door_path = 2.0 * std::hypot(0.5, 0.5) * to_samples;
    CHECK(r.histogram.total_energy(0) > 0.0);
    CHECK(first_arrival(r) >= 0.9 * door_path);
    // Without diffraction nothing arrives along the bent door path itself; a grazing path through
    // the wall junction at (2.5, 0) has the same length and must stay blocked.
    CHECK(first_arrival(r) > door_path + 1.0);
    for (const ERCluster& c : cluster_early_reflections(r.early, scene)) CHECK(c.order() > 0);
  }
  SUBCASE("line of sight through the opening") {
    const Vec3 s{2.0, 0.5, 1.5}, l{3.0, 2.5, 1.5};  // crosses x = 2.5 at y = 1.5
    const ConnectionResult r = connect_and_accumulate(scene, l, 1, trace_source_subpaths(scene, s, 0, p), p);
    const double through = length(l - s) * to_samples;
    CHECK(first_arrival(r) == doctest::Approx(through).epsilon(0.10));
  }
}
