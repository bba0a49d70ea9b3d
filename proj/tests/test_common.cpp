#include <cmath>
#include <sstream>

#include "doctest.h"
#include "laser/common.hpp"

using namespace laser;

TEST_SUITE("common") {

TEST_CASE("rng streams are pure functions of key and counter") {
  Rng a = Rng::substream(7, 1, 2);
  Rng b = Rng::substream(7, 1, 2);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a == b);
  Rng resumed(a.key(), a.counter());
  CHECK(resumed.next_u64() == a.next_u64());
  CHECK(Rng::substream(7, 1, 2).next_u64() != Rng::substream(7, 2, 1).next_u64());
}

TEST_CASE("uniform, below and normal stay in range") {
  Rng r(99);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(r.below(7) < 7u);
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  CHECK_THROWS_AS(r.below(0), PreconditionError);
}

TEST_CASE("sample_cumulative follows the weights") {
  std::vector<double> cum{1.0, 4.0};
  Rng r(3);
  int first = 0;
  for (int i = 0; i < 40000; ++i) first += sample_cumulative(cum, r) == 0;
  CHECK(first / 40000.0 == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("binary io round trip and truncation") {
  std::stringstream s;
  binio::write_u32(s, 0xDEADBEEF);
  binio::write_u64(s, 1ULL << 40);
  binio::write_f64(s, -0.1);
  CHECK(binio::read_u32(s) == 0xDEADBEEFu);
  CHECK(binio::read_u64(s) == (1ULL << 40));
  CHECK(binio::read_f64(s) == -0.1);
  CHECK_THROWS_AS(binio::read_u64(s), FormatError);
}

TEST_CASE("fingerprint is 64-bit FNV-1a") {
  CHECK(Fingerprint().value() == 0xcbf29ce484222325ULL);
  CHECK(Fingerprint().add("a").value() == 0xaf63dc4c8601ec8cULL);
  CHECK(Fingerprint().add("a").hex() == "af63dc4c8601ec8c");
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.5) == "2.5");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

}
