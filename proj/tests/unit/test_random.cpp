#include <doctest.h>

#include <stdexcept>

#include <set>

#include "driftlab/random.hpp"

using namespace driftlab;

TEST_CASE("streams are reproducible and keyed") {
  const SeedTree a(42), b(42), c(43);
  RandomStream x = a.child(tags::kForward).stream(3);
  RandomStream y = b.child(tags::kForward).stream(3);
  for (int i = 0; i < 100; ++i) CHECK(x() == y());
  CHECK(a.key() != c.key());
  CHECK(a.child(1).key() != a.child(2).key());
  CHECK(a.stream(0)() != a.stream(1)());
}

TEST_CASE("uniform and uniform_int ranges") {
  RandomStream rs = SeedTree(1).stream(0);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const double u = rs.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = rs.uniform_int(3, 7);
    CHECK(k >= 3);
    CHECK(k <= 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("normal draws have unit moments") {
  RandomStream rs = SeedTree(5).stream(0);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rs.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
