#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "oadn/errors.hpp"
#include "oadn/geometry.hpp"
#include "oadn/io.hpp"
#include "oadn/rng.hpp"
#include "oadn/sinogram.hpp"
#include "testutil.hpp"

using namespace oadn;

TEST_CASE("seeded streams are deterministic per (seed, label)") {
  Rng a({42}, "thermal");
  Rng b({42}, "thermal");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c({42}, "thermal");
  Rng d({42}, "parasitic");
  bool all_equal = true;
  for (int i = 0; i < 100; ++i)
    if (c.next_u64() != d.next_u64()) all_equal = false;
  CHECK_FALSE(all_equal);

  Rng e({42}, "x");
  Rng f({43}, "x");
  all_equal = true;
  for (int i = 0; i < 100; ++i)
    if (e.next_u64() != f.next_u64()) all_equal = false;
  CHECK_FALSE(all_equal);
}

TEST_CASE("rng helpers stay in range") {
  Rng rng({7}, "helpers");
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = rng.below(17);
    CHECK(k < 17);
    const auto j = rng.uniform_int(-3, 3);
    CHECK(j >= -3);
    CHECK(j <= 3);
  }
  // Poisson(0) is identically zero.
  for (int i = 0; i < 50; ++i) CHECK(rng.poisson(0.0) == 0);
  // Gaussian moments, loose bounds at n = 20000.
  double sum = 0.0, sum2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum2 += g * g;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("permutation is a permutation") {
  Rng rng({9}, "perm");
  const auto p = rng.permutation(257);
  std::vector<bool> seen(257, false);
  for (auto i : p) {
    CHECK_FALSE(seen[i]);
    seen[i] = true;
  }
}

TEST_CASE("OASG golden bytes: 2x3 zero sinogram") {
  testutil::TempDir tmp("oasg_golden");
  Sinogram s(2, 3, 40e6);
  const auto path = tmp.path() / "zero.oasg";
  write_sinogram(s, path);

  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 26 + 24);  // header + 6 f32 zeros

  const unsigned char header[] = {
      'O', 'A', 'S', 'G',      // magic
      0x01, 0x00,              // version
      0x02, 0x00, 0x00, 0x00,  // n_transducers
      0x03, 0x00, 0x00, 0x00,  // n_samples
      // 40e6 as f64 LE
      0x00, 0x00, 0x00, 0x00, 0x80, 0x12, 0x83, 0x41,
      // wavelength: quiet NaN f32
      0x00, 0x00, 0xC0, 0x7F};
  CHECK(std::memcmp(bytes.data(), header, sizeof(header)) == 0);
  for (std::size_t i = 26; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("OASG round trip is bit exact for f32-valued sinograms") {
  testutil::TempDir tmp("oasg_rt");
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Sinogram s = testutil::random_sinogram(5, 11, 40e6, seed);
    if (seed % 2) s.wavelength_nm = 700.0 + static_cast<double>(seed);
    const auto path = tmp.path() / "rt.oasg";
    write_sinogram(s, path);
    const Sinogram r = read_sinogram(path);
    CHECK(r.n_transducers == s.n_transducers);
    CHECK(r.n_samples == s.n_samples);
    CHECK(r.sample_rate_hz == s.sample_rate_hz);
    CHECK(r.wavelength_nm.has_value() == s.wavelength_nm.has_value());
    if (r.wavelength_nm)
      CHECK(static_cast<float>(*r.wavelength_nm) ==
            static_cast<float>(*s.wavelength_nm));
    REQUIRE(r.data.size() == s.data.size());
    for (std::size_t i = 0; i < r.data.size(); ++i) CHECK(r.data[i] == s.data[i]);
  }
}

TEST_CASE("OASG payload size matches the format arithmetic") {
  testutil::TempDir tmp("oasg_size");
  Sinogram s(256, 1808, 40e6);
  const auto path = tmp.path() / "full.oasg";
  write_sinogram(s, path);
  CHECK(std::filesystem::file_size(path) == 26 + std::size_t{256} * 1808 * 4);
  CHECK(std::size_t{256} * 1808 * 4 == 1851392);
}

TEST_CASE("read_sinogram rejects malformed files") {
  testutil::TempDir tmp("oasg_bad");
  const auto good = tmp.path() / "good.oasg";
  write_sinogram(Sinogram(2, 3, 40e6), good);

  SUBCASE("bad magic") {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes[0] = 'X';
    bytes[1] = 'X';
    const auto bad = tmp.path() / "bad_magic.oasg";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(read_sinogram(bad), doctest::Contains("bad magic"),
                         DataError);
  }
  SUBCASE("truncated payload names expected and actual sizes") {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 5);
    const auto bad = tmp.path() / "trunc.oasg";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
    try {
      read_sinogram(bad);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("50") != std::string::npos);  // expected byte count
      CHECK(msg.find("45") != std::string::npos);  // actual byte count
    }
  }
  SUBCASE("non-finite sample rejected") {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + 26, &nan, 4);
    const auto bad = tmp.path() / "nan.oasg";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(read_sinogram(bad), DataError);
  }
}

TEST_CASE("OAIM round trip") {
  testutil::TempDir tmp("oaim");
  ImageGrid img(7, 5, 0.02);
  Rng rng({3}, "oaim");
  for (double& v : img.pixels) v = static_cast<float>(std::abs(rng.gaussian()));
  const auto path = tmp.path() / "img.oaim";
  write_image(img, path);
  const ImageGrid r = read_image(path);
  CHECK(r.n_x == img.n_x);
  CHECK(r.n_y == img.n_y);
  CHECK(r.extent_m == img.extent_m);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r.pixels[i] == img.pixels[i]);
}

TEST_CASE("PGM read normalizes by maxval") {
  testutil::TempDir tmp("pgm");
  const auto path = tmp.path() / "t.pgm";
  std::ofstream out(path, std::ios::binary);
  out << "P5\n# comment\n2 2\n255\n";
  const unsigned char px[4] = {0, 51, 102, 255};
  out.write(reinterpret_cast<const char*>(px), 4);
  out.close();
  const ImageGrid img = read_pgm(path);
  CHECK(img.n_x == 2);
  CHECK(img.n_y == 2);
  CHECK(img.pixels[0] == doctest::Approx(0.0));
  CHECK(img.pixels[1] == doctest::Approx(0.2));
  CHECK(img.pixels[3] == doctest::Approx(1.0));
}

TEST_CASE("sinogram validation catches bad shapes and values") {
  Sinogram s(2, 3, 40e6);
  s.data.pop_back();
  CHECK_THROWS_AS(s.validate(), DataError);
  Sinogram t(2, 3, 40e6);
  t.data[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(t.validate(), DataError);
}

TEST_CASE("transducer positions are equidistant and reproducible") {
  ArrayGeometry g;
  g.n_transducers = 64;
  g.radius_m = 0.009;
  g.coverage_deg = 145.0;
  g.sample_rate_hz = 40e6;
  const auto pos = g.transducer_positions();
  REQUIRE(pos.size() == 64);
  // Chord lengths between neighbors all equal.
  double chord0 = std::hypot(pos[1].x - pos[0].x, pos[1].y - pos[0].y);
  for (std::size_t d = 1; d + 1 < pos.size(); ++d) {
    const double c = std::hypot(pos[d + 1].x - pos[d].x, pos[d + 1].y - pos[d].y);
    CHECK(c == doctest::Approx(chord0).epsilon(1e-12));
  }
  // All on the circle.
  for (const auto& p : pos)
    CHECK(std::hypot(p.x - g.center.x, p.y - g.center.y) ==
          doctest::Approx(g.radius_m).epsilon(1e-12));
  // Bit-exact reproducibility.
  const auto pos2 = g.transducer_positions();
  for (std::size_t d = 0; d < pos.size(); ++d) {
    CHECK(pos[d].x == pos2[d].x);
    CHECK(pos[d].y == pos2[d].y);
  }
}

TEST_CASE("sinogram stack round trip with manifest") {
  testutil::TempDir tmp("stack");
  SinogramStack stack;
  for (int i = 0; i < 3; ++i) {
    stack.wavelengths_nm.push_back(700.0 + 10.0 * i);
    stack.scans.push_back(testutil::random_sinogram(4, 8, 40e6, 100 + i));
  }
  KeyValueFile geo;
  geo.set("n_transducers", std::uint64_t{4});
  write_sinogram_stack(stack, tmp.path() / "stack", geo);
  const SinogramStack r = read_sinogram_stack(tmp.path() / "stack");
  REQUIRE(r.scans.size() == 3);
  CHECK(r.wavelengths_nm[1] == doctest::Approx(710.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < r.scans[i].size(); ++j)
      CHECK(r.scans[i].data[j] == stack.scans[i].data[j]);
}

TEST_CASE("key=value file parses comments and round trips") {
  KeyValueFile kv;
  kv.set("alpha", "1");
  kv.set("beta.gamma", 2.5);
  const std::string text = kv.serialize() + "# trailing comment\n";
  const KeyValueFile r = KeyValueFile::parse(text);
  CHECK(r.get("alpha") == "1");
  CHECK(r.get_double("beta.gamma") == doctest::Approx(2.5));
  CHECK_THROWS_AS(r.get("missing"), DataError);
}
