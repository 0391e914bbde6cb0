#include <doctest.h>

#include <fstream>
#include <iterator>

#include "echonav/errors.hpp"
#include "echonav/precompute.hpp"
#include "echonav/storage.hpp"
#include "helpers.hpp"

using namespace echonav;
using testing_support::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

NavGraph five_nodes() {
  std::vector<Vec3> nodes;
  for (int i = 0; i < 5; ++i) nodes.push_back({1.0 + 0.5 * i, 2.0, 1.5});
  return NavGraph(nodes, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 0.5, 1.5);
}

SimParams cheap() {
  SimParams p;
  p.rays_per_source = 300;
  p.rays_per_listener = 100;
  p.connection_paths = 30;
  p.max_ir_seconds = 0.3;
  return p;
}

}  // namespace

TEST_CASE("every ordered pair is stored once") {
  TempDir dir("pre");
  const AccelStructure accel(generate_shoebox({5, 4, 3}));
  const AcousticScene scene(accel, MaterialDb::defaults());
  std::size_t calls = 0;
  PrecomputeOptions opt;
  opt.progress = [&](std::size_t done, std::size_t total) {
    ++calls;
    CHECK(done <= total);
    CHECK(total == 25u);
  };
  const auto stats = precompute_grid(scene, five_nodes(), cheap(), dir / "g.ssir", opt);
  CHECK(stats.finished);
  CHECK(stats.computed == 25u);
  CHECK(calls == 25u);
  const SsirReader r(dir / "g.ssir");
  CHECK(r.finalized());
  CHECK(r.pair_count() == 25u);
  CHECK(r.node_count() == 5u);
  for (std::uint32_t s = 0; s < 5; ++s)
    for (std::uint32_t l = 0; l < 5; ++l) CHECK(r.contains(s, l));
  // Matches a direct single-pair computation.
  CHECK(r.read(1, 3) == compute_rir_pair(scene, five_nodes().node(1), 1, five_nodes().node(3), 3, cheap()));

  // A finished container is left untouched on re-run.
  const auto again = precompute_grid(scene, five_nodes(), cheap(), dir / "g.ssir");
  CHECK(again.computed == 0u);
  CHECK(again.skipped == 25u);
}

TEST_CASE("output bytes do not depend on threads or interruption") {
  TempDir dir("pre");
  const AccelStructure accel(fixtures::two_room());
  const AcousticScene scene(accel, MaterialDb::defaults());
  const NavGraph g = five_nodes();

  PrecomputeOptions serial;
  serial.threads = 1;
  precompute_grid(scene, g, cheap(), dir / "serial.ssir", serial);

  PrecomputeOptions parallel;
  parallel.threads = 4;
  precompute_grid(scene, g, cheap(), dir / "parallel.ssir", parallel);

  PrecomputeOptions partial;
  partial.threads = 3;
  partial.max_new_pairs = 7;
  const auto first = precompute_grid(scene, g, cheap(), dir / "resumed.ssir", partial);
  CHECK_FALSE(first.finished);
  CHECK(first.computed == 7u);
  CHECK(std::filesystem::exists(journal_path(dir / "resumed.ssir")));
  CHECK(SsirReader(dir / "resumed.ssir").pair_count() == 7u);
  partial.max_new_pairs = 0;
  const auto second = precompute_grid(scene, g, cheap(), dir / "resumed.ssir", partial);
  CHECK(second.finished);
  CHECK(second.skipped == 7u);
  CHECK(second.computed == 18u);

  const std::string reference = slurp(dir / "serial.ssir");
  CHECK(reference.size() > 1000u);
  CHECK(slurp(dir / "parallel.ssir") == reference);
  CHECK(slurp(dir / "resumed.ssir") == reference);
}

TEST_CASE("mismatched containers are rejected") {
  TempDir dir("pre");
  const AccelStructure accel(generate_shoebox({5, 4, 3}));
  const AcousticScene scene(accel, MaterialDb::defaults());
  {
    auto w = SsirWriter::create(dir / "x.ssir", 44100, 9);
    w.close();
  }
  CHECK_THROWS_AS(precompute_grid(scene, five_nodes(), cheap(), dir / "x.ssir"), ValidationError);
  CHECK_THROWS_AS(precompute_grid(scene, NavGraph({}, {}, 0.5, 1.5), cheap(), dir / "y.ssir"), ValidationError);
}
