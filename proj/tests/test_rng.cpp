#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "feta/numeric.hpp"
#include "feta/rng.hpp"

using namespace feta;

TEST_CASE("same (seed, stream) reproduces the identical sequence") {
  SeededRng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  SeededRng c(42, 7), d(42, 7);
  for (int i = 0; i < 1000; ++i) CHECK(c.next_gaussian() == d.next_gaussian());
}

TEST_CASE("distinct stream ids give independent streams") {
  SeededRng a(42, 0), b(42, 1);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("derive is order sensitive and chainable") {
  const SeededRng root(9);
  SeededRng ab = root.derive(1).derive(2);
  SeededRng ba = root.derive(2).derive(1);
  CHECK(ab.next_u64() != ba.next_u64());
  SeededRng named1 = root.derive("spatial");
  SeededRng named2 = root.derive("spatial");
  CHECK(named1.next_u64() == named2.next_u64());
}

TEST_CASE("gaussian_vector zero std returns the zero vector") {
  SeededRng rng(1);
  const Vec v = gaussian_vector(rng, 3, 0.0);
  CHECK(v == Vec{0.0, 0.0, 0.0});
}

TEST_CASE("gaussian_vector sample variance matches std^2") {
  SeededRng rng(5);
  const Vec v = gaussian_vector(rng, 100000, 2.0);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size() - 1);
  CHECK(var > 3.9);
  CHECK(var < 4.1);
}

TEST_CASE("gaussian_vector is deterministic per stream") {
  SeededRng a(3, 11), b(3, 11);
  CHECK(gaussian_vector(a, 64, 1.5) == gaussian_vector(b, 64, 1.5));
}

TEST_CASE("gaussian_vector rejects bad std") {
  SeededRng rng(1);
  CHECK_THROWS_AS(gaussian_vector(rng, 4, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_vector(rng, 4, std::nan("")), std::invalid_argument);
}

TEST_CASE("poisson_subsample edge rates") {
  SeededRng rng(2);
  CHECK(poisson_subsample(rng, 5, 0.0).empty());
  const auto all = poisson_subsample(rng, 5, 1.0);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(poisson_subsample(rng, 5, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(poisson_subsample(rng, 5, -0.1), std::invalid_argument);
}

TEST_CASE("poisson_subsample size concentrates around n q") {
  SeededRng rng(8);
  const auto idx = poisson_subsample(rng, 10000, 0.1);
  // 3 sigma with sigma = sqrt(n q (1-q)) = 30
  CHECK(idx.size() > 910);
  CHECK(idx.size() < 1090);
  std::set<std::size_t> uniq(idx.begin(), idx.end());
  CHECK(uniq.size() == idx.size());
}

TEST_CASE("next_gaussian moments are sane") {
  SeededRng rng(13);
  double m = 0.0, m2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_gaussian();
    m += x;
    m2 += x * x;
  }
  m /= n;
  m2 /= n;
  CHECK(std::abs(m) < 0.01);
  CHECK(std::abs(m2 - 1.0) < 0.02);
}
