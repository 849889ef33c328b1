#include <catch2/catch_amalgamated.hpp>

#include "alevar/rng.hpp"

using alevar::SplitRng;

TEST_CASE("same key reproduces the same stream") {
  SplitRng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct keys give distinct streams") {
  SplitRng a(1), b(2);
  int differ = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() != b.next_u64()) ++differ;
  REQUIRE(differ > 90);
}

TEST_CASE("split streams are independent of parent draw position") {
  SplitRng parent(7);
  SplitRng child_before = parent.split(3);
  parent.next_u64();
  parent.next_u64();
  SplitRng child_after = parent.split(3);
  for (int i = 0; i < 20; ++i)
    REQUIRE(child_before.next_u64() == child_after.next_u64());
}

TEST_CASE("sibling splits differ") {
  SplitRng parent(7);
  SplitRng a = parent.split(0), b = parent.split(1);
  int differ = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() != b.next_u64()) ++differ;
  REQUIRE(differ > 90);
}

TEST_CASE("uniform stays strictly inside (0,1)") {
  SplitRng rng(11);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200000; ++i) {
    double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < 0.001);
  REQUIRE(hi > 0.999);
}

TEST_CASE("normal draws have the right first two moments") {
  SplitRng rng(13);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  double m = s / n;
  double v = s2 / n - m * m;
  REQUIRE(std::fabs(m) < 0.01);
  REQUIRE(std::fabs(v - 1.0) < 0.02);
}

TEST_CASE("bernoulli frequency matches p") {
  SplitRng rng(17);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3);
  REQUIRE(std::fabs(hits / static_cast<double>(n) - 0.3) < 0.01);
}

TEST_CASE("below(n) covers the full range and respects the bound") {
  SplitRng rng(19);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    auto v = rng.below(7);
    REQUIRE(v < 7);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) REQUIRE(c > 8000);
}
