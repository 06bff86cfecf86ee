#include "nccr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

using nccr::Rng;
using nccr::derive_seed;

TEST_CASE("derive_seed is deterministic and separates labels and indices") {
  CHECK(derive_seed(42, "init", 0) == derive_seed(42, "init", 0));
  CHECK(derive_seed(42, "init", 0) != derive_seed(42, "init", 1));
  CHECK(derive_seed(42, "init", 0) != derive_seed(42, "shuffle", 0));
  CHECK(derive_seed(42, "init", 0) != derive_seed(43, "init", 0));

  // no collisions across a modest grid of (parent, label, index)
  std::set<uint64_t> seen;
  const char* labels[] = {"init", "shuffle", "perturb", "item", "attack", "poison"};
  for (uint64_t parent : {0ull, 1ull, 42ull, 0xffffffffffffffffull}) {
    for (const char* label : labels) {
      for (uint64_t idx = 0; idx < 50; ++idx) {
        seen.insert(derive_seed(parent, label, idx));
      }
    }
  }
  CHECK(seen.size() == 4 * 6 * 50);
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("uniform(lo,hi) maps into the requested interval") {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.5, 3.5);
    CHECK(u >= -2.5);
    CHECK(u < 3.5);
  }
}

TEST_CASE("uniform_int is in range and roughly uniform") {
  Rng rng(9);
  std::vector<int> counts(10, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const uint64_t v = rng.uniform_int(10);
    REQUIRE(v < 10);
    counts[v]++;
  }
  for (int c : counts) {
    CHECK(c > n / 10 - 600);
    CHECK(c < n / 10 + 600);
  }
  CHECK(rng.uniform_int(1) == 0);
}

TEST_CASE("normal has the requested moments") {
  Rng rng(10);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal(3.0, 2.0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == doctest::Approx(3.0).epsilon(0.02));
  CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("truncated_normal respects the bound") {
  Rng rng(11);
  const double stddev = 1.0, bound = 1.5;
  int outer_third = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.truncated_normal(stddev, bound);
    CHECK(std::abs(v) <= bound);
    if (std::abs(v) > bound * 2.0 / 3.0) outer_third++;
  }
  // mass reaches the tails, so it is not just a clipped spike at 0
  CHECK(outer_third > n / 20);
  CHECK(rng.truncated_normal(0.0, 1.0) == 0.0);
}

TEST_CASE("truncated_normal with the 3-sigma bound looks gaussian in the middle") {
  // bound = 3*stddev truncates ~0.27% of mass; the sample stddev should be
  // close to the nominal one
  Rng rng(12);
  const int n = 50000;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.truncated_normal(0.5, 1.5);
    sq += v * v;
  }
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> a(100), b(100);
  for (int i = 0; i < 100; ++i) a[i] = b[i] = i;

  Rng r1(13), r2(13);
  r1.shuffle(a);
  r2.shuffle(b);
  CHECK(a == b);

  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);

  std::vector<int> c(100);
  for (int i = 0; i < 100; ++i) c[i] = i;
  Rng r3(14);
  r3.shuffle(c);
  CHECK(c != a);
}

TEST_CASE("streams from different derived seeds disagree") {
  Rng a(derive_seed(100, "item", 0));
  Rng b(derive_seed(100, "item", 1));
  int same = 0;
  for (int i = 0; i < 64; ++i) {
    if (a.next_u64() == b.next_u64()) same++;
  }
  CHECK(same == 0);
}
