#include <doctest.h>

#include <cmath>

#include "echonav/accel.hpp"
#include "echonav/random.hpp"
#include "echonav/view.hpp"
#include "oracles.hpp"

using namespace echonav;

namespace {

/// Shoebox plus `n` random small triangles floating inside it.
Scene clutter_scene(int n, std::uint64_t seed) {
  const Scene box = generate_shoebox({10, 8, 3});
  std::vector<Vec3> v = box.vertices();
  std::vector<Triangle> t = box.triangles();
  std::vector<std::string> c = box.classes();
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const Vec3 p{0.5 + 9 * rng.uniform(), 0.5 + 7 * rng.uniform(), 0.2 + 2.6 * rng.uniform()};
    const auto base = static_cast<std::uint32_t>(v.size());
    v.push_back(p);
    v.push_back(p + Vec3{0.3 * rng.uniform() + 0.05, 0.1 * rng.uniform(), 0.1 * rng.uniform()});
    v.push_back(p + Vec3{0.1 * rng.uniform(), 0.1 * rng.uniform(), 0.3 * rng.uniform() + 0.05});
    t.push_back({base, base + 1, base + 2});
    c.push_back("custom");
  }
  return Scene(v, t, c);
}

struct OracleHit {
  double t = -1.0;
  std::uint32_t tri = 0;
};

OracleHit brute(const Scene& s, const Vec3& o, const Vec3& d, double tmin) {
  OracleHit best;
  const double oo[3] = {o.x, o.y, o.z}, dd[3] = {d.x, d.y, d.z};
  for (std::size_t i = 0; i < s.triangle_count(); ++i) {
    const Vec3 a = s.vertex(i, 0), b = s.vertex(i, 1), c = s.vertex(i, 2);
    const double va[3] = {a.x, a.y, a.z}, vb[3] = {b.x, b.y, b.z}, vc[3] = {c.x, c.y, c.z};
    const double t = oracle::ray_triangle(oo, dd, va, vb, vc);
    if (t > tmin && (best.t < 0 || t < best.t)) best = {t, static_cast<std::uint32_t>(i)};
  }
  return best;
}

}  // namespace

TEST_CASE("axis-aligned ceiling hit") {
  const AccelStructure accel(generate_shoebox({10, 8, 3}));
  const auto hit = cast_ray(accel, {5, 4, 1.5}, {0, 0, 1});
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(1.5));
  CHECK(hit->cls == "ceiling");
  CHECK(length(hit->normal) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(hit->normal.z < 0.0);  // faces the arriving ray
}

TEST_CASE("ray from outside pointing away misses") {
  const AccelStructure accel(generate_shoebox({10, 8, 3}));
  CHECK_FALSE(cast_ray(accel, {-5, 4, 1.5}, {-1, 0, 0}));
  CHECK_FALSE(cast_ray(accel, {5, 4, 10}, {0, 0, 1}));
}

TEST_CASE("BVH nearest hit equals an exhaustive scan for 10k rays") {
  const Scene scene = clutter_scene(2000, 11);
  const AccelStructure accel(scene);
  Rng rng(12);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 o{1 + 8 * rng.uniform(), 1 + 6 * rng.uniform(), 0.5 + 2 * rng.uniform()};
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const Vec3 d = sample_uniform_sphere(u1, u2);
    const auto hit = cast_ray(accel, o, d);
    const OracleHit ref = brute(scene, o, d, kRayEpsilon);
    if (!hit || ref.t < 0) {
      mismatches += hit.has_value() != (ref.t >= 0);
      continue;
    }
    const bool same_t = std::abs(hit->t - ref.t) <= 1e-6 * std::max(1.0, ref.t);
    if (!same_t || hit->triangle != ref.tri) ++mismatches;
    CHECK(hit->t >= 0.0);
  }
  CHECK(mismatches == 0);
}

TEST_CASE("library brute-force path agrees with the BVH") {
  const AccelStructure accel(clutter_scene(500, 4));
  Rng rng(9);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 o{5, 4, 1.5};
    const double u1 = rng.uniform(), u2 = rng.uniform();
    const Vec3 d = sample_uniform_sphere(u1, u2);
    const auto a = accel.closest_hit(o, d), b = accel.closest_hit_brute_force(o, d);
    REQUIRE(a.has_value() == b.has_value());
    if (a) CHECK(a->triangle == b->triangle);
  }
}

TEST_CASE("generated shoebox is watertight over 100k directions") {
  const AccelStructure accel(generate_shoebox({10, 8, 3}));
  Rng rng(21);
  int escapes = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u1 = rng.uniform(), u2 = rng.uniform();
    if (!cast_ray(accel, {3.3, 2.7, 1.1}, sample_uniform_sphere(u1, u2))) ++escapes;
  }
  CHECK(escapes == 0);
}

TEST_CASE("occluded and for_each_hit") {
  const AccelStructure accel(generate_shoebox({10, 8, 3}));
  CHECK(accel.occluded({5, 4, 1.5}, {1, 0, 0}, 0.0, 10.0));
  CHECK_FALSE(accel.occluded({5, 4, 1.5}, {1, 0, 0}, 0.0, 4.9));
  int hits = 0;
  accel.for_each_hit({-1, 3.3, 1.1}, {1, 0, 0}, 0.0, 100.0, [&](std::uint32_t, double) {
    ++hits;
    return true;
  });
  CHECK(hits == 2);
}

TEST_CASE("view rendering") {
  const AccelStructure accel(generate_shoebox({10, 8, 3}));
  SUBCASE("flat wall 2 m ahead") {
    const ViewFrame v = render_view(accel, Pose{{8, 4, 1.5}, 0.0});
    CHECK(v.height == 128);
    CHECK(v.width == 128);
    CHECK(v.depth.size() == 128u * 128u);
    CHECK(v.rgb.size() == 128u * 128u * 3u);
    CHECK(v.depth_at(64, 64) == doctest::Approx(2.0).epsilon(0.005));
    const auto hit = cast_ray(accel, {8, 4, 1.5}, {1, 0, 0});
    REQUIRE(hit);
    CHECK(std::abs(v.depth_at(64, 64) - hit->t) < 1e-4);
    for (float d : v.depth) CHECK(d >= 0.0f);
  }
  SUBCASE("facing the void") {
    const ViewFrame v = render_view(accel, Pose{{-5, 4, 1.5}, 3.14159265358979});
    for (float d : v.depth) REQUIRE(d == 0.0f);
    for (float c : v.rgb) REQUIRE(c == 0.0f);
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS(render_view(accel, Pose{}, 0));
    CHECK_THROWS(render_view(accel, Pose{}, 16, 180.0));
  }
}
