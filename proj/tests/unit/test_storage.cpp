#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "echonav/errors.hpp"
#include "echonav/random.hpp"
#include "echonav/storage.hpp"
#include "helpers.hpp"

using namespace echonav;
using testing_support::TempDir;

namespace {

AmbisonicIR make_ir(std::uint32_t s, std::uint32_t l, std::size_t frames, std::uint64_t seed = 1) {
  AmbisonicIR ir;
  ir.source_id = s;
  ir.listener_id = l;
  ir.sample_rate = 44100;
  Rng rng(derive_seed(seed, {s, l}));
  ir.samples.resize(frames * kShChannels);
  for (float& v : ir.samples) v = static_cast<float>(rng.normal());
  return ir;
}

void flip_byte(const std::filesystem::path& p, std::uint64_t offset) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(static_cast<std::streamoff>(offset));
  char c = 0;
  f.read(&c, 1);
  c = static_cast<char>(c ^ 0x5a);
  f.seekp(static_cast<std::streamoff>(offset));
  f.write(&c, 1);
}

}  // namespace

TEST_CASE("round trip is bit-exact") {
  TempDir dir("ssir");
  const auto path = dir / "a.ssir";
  std::vector<AmbisonicIR> irs{make_ir(0, 0, 10), make_ir(0, 1, 1), make_ir(3, 7, 500)};
  irs[1].samples[4] = -0.0f;
  irs[1].samples[5] = std::numeric_limits<float>::denorm_min();
  {
    auto w = SsirWriter::create(path, 44100, 8);
    for (const auto& ir : irs) w.write(ir);
    w.close();
  }
  CHECK_FALSE(std::filesystem::exists(journal_path(path)));
  const SsirReader r(path);
  CHECK(r.finalized());
  CHECK(r.pair_count() == 3u);
  CHECK(r.node_count() == 8u);
  CHECK(r.sample_rate() == 44100u);
  for (const auto& ir : irs) {
    const AmbisonicIR got = r.read(ir.source_id, ir.listener_id);
    REQUIRE(got.samples.size() == ir.samples.size());
    CHECK(std::memcmp(got.samples.data(), ir.samples.data(), ir.samples.size() * sizeof(float)) == 0);
    CHECK(got.sample_rate == 44100.0);
  }
  CHECK(std::signbit(r.read(0, 1).samples[4]));
  CHECK_NOTHROW(r.verify());
  CHECK(read_rir(path, 3, 7) == irs[2]);
}

TEST_CASE("file size follows the layout") {
  TempDir dir("ssir");
  const auto path = dir / "b.ssir";
  auto w = SsirWriter::create(path, 44100, 5);
  for (std::uint32_t s = 0; s < 5; ++s)
    for (std::uint32_t l = 0; l < 5; ++l) w.write(make_ir(s, l, 100));
  w.close();
  CHECK(std::filesystem::file_size(path) == 40u + 25u * 100u * 9u * 4u + 25u * 24u);
}

TEST_CASE("writer argument checks") {
  TempDir dir("ssir");
  auto w = SsirWriter::create(dir / "c.ssir", 44100, 10);
  w.write(make_ir(3, 7, 4));
  CHECK_THROWS_AS(w.write(make_ir(3, 7, 4)), ValidationError);
  CHECK(w.contains(3, 7));
  CHECK_FALSE(w.contains(7, 3));
  AmbisonicIR bad = make_ir(1, 1, 4);
  bad.samples.pop_back();
  CHECK_THROWS_AS(w.write(bad), ValidationError);
  AmbisonicIR rate = make_ir(1, 2, 4);
  rate.sample_rate = 16000;
  CHECK_THROWS_AS(w.write(rate), ValidationError);
  w.close();
  CHECK_THROWS_AS(SsirWriter::open_or_create(dir / "c.ssir", 16000, 10), ValidationError);
}

TEST_CASE("damaged containers are reported as corruption") {
  TempDir dir("ssir");
  const auto path = dir / "d.ssir";
  {
    auto w = SsirWriter::create(path, 44100, 4);
    for (std::uint32_t l = 0; l < 4; ++l) w.write(make_ir(0, l, 200));
    w.close();
  }
  const auto size = std::filesystem::file_size(path);

  SUBCASE("truncated tail") {
    std::filesystem::resize_file(path, size - 100);
    CHECK_THROWS_AS(SsirReader{path}, CorruptionError);
  }
  SUBCASE("padded tail") {
    std::ofstream(path, std::ios::app | std::ios::binary) << "xx";
    CHECK_THROWS_AS(SsirReader{path}, CorruptionError);
  }
  SUBCASE("payload bit flip") {
    flip_byte(path, kSsirHeaderSize + 200 * 36 + 17);
    const SsirReader r(path);
    CHECK_NOTHROW(r.read(0, 0));
    CHECK_THROWS_AS(r.read(0, 1), CorruptionError);
    CHECK_THROWS_AS(r.verify(), CorruptionError);
  }
  SUBCASE("bad magic") {
    flip_byte(path, 0);
    CHECK_THROWS_AS(SsirReader{path}, CorruptionError);
  }
  SUBCASE("shorter than a header") {
    std::filesystem::resize_file(path, 10);
    CHECK_THROWS_AS(SsirReader{path}, CorruptionError);
  }
  SUBCASE("corruption is a storage error") {
    std::filesystem::resize_file(path, size - 1);
    CHECK_THROWS_AS(SsirReader{path}, StorageError);
  }
}

TEST_CASE("missing data is not found") {
  TempDir dir("ssir");
  CHECK_THROWS_AS(SsirReader{dir / "none.ssir"}, NotFoundError);
  auto w = SsirWriter::create(dir / "e.ssir", 44100, 4);
  w.write(make_ir(1, 2, 3));
  w.close();
  const SsirReader r(dir / "e.ssir");
  CHECK_THROWS_AS(r.read(2, 1), NotFoundError);
  CHECK_FALSE(r.contains(2, 1));
}

TEST_CASE("an open container is readable through its journal") {
  TempDir dir("ssir");
  const auto path = dir / "f.ssir";
  auto w = SsirWriter::create(path, 44100, 4);
  w.write(make_ir(0, 0, 50));
  w.write(make_ir(0, 1, 60));
  {
    const SsirReader r(path);
    CHECK_FALSE(r.finalized());
    CHECK(r.pair_count() == 2u);
    CHECK(r.read(0, 1) == make_ir(0, 1, 60));
  }
  w.close();
  CHECK(SsirReader(path).finalized());
}

TEST_CASE("resume discards a torn append and continues") {
  TempDir dir("ssir");
  const auto path = dir / "g.ssir";
  {
    auto w = SsirWriter::create(path, 44100, 4);
    w.write(make_ir(0, 0, 50));
    w.write(make_ir(0, 1, 50));
    w.abandon();
  }
  // Half-written payload of a third IR that never reached the journal.
  std::ofstream(path, std::ios::app | std::ios::binary) << std::string(777, 'z');
  {
    auto w = SsirWriter::open_or_create(path, 44100, 4);
    CHECK(w.pair_count() == 2u);
    CHECK(w.contains(0, 1));
    w.write(make_ir(0, 2, 50));
    w.close();
  }
  const SsirReader r(path);
  CHECK(r.finalized());
  CHECK(r.pair_count() == 3u);
  CHECK_NOTHROW(r.verify());
  CHECK(std::filesystem::file_size(path) == 40u + 3u * 50u * 36u + 3u * 24u);

  // A finalized container can be reopened and extended.
  {
    auto w = SsirWriter::resume(path);
    w.write(make_ir(1, 0, 5));
    w.close();
  }
  CHECK(SsirReader(path).pair_count() == 4u);
  CHECK(SsirReader(path).read(0, 2) == make_ir(0, 2, 50));
}
