#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "feta/errors.hpp"
#include "feta/features.hpp"
#include "feta/numeric.hpp"
#include "support/toy.hpp"

using namespace feta;
namespace fs = std::filesystem;

TEST_CASE("sample_projection shape, determinism, stats") {
  const RffProjection tiny = sample_projection(4, 2, 1);
  CHECK(tiny.omega.rows == 1);
  CHECK(tiny.omega.cols == 1);

  const RffProjection a = sample_projection(4, 64, 8);
  const RffProjection b = sample_projection(4, 64, 8);
  CHECK(a.omega.data == b.omega.data);
  CHECK_THROWS_AS(sample_projection(4, 63, 8), std::invalid_argument);

  const RffProjection big = sample_projection(11, 10000, 64);
  double m = 0.0, m2 = 0.0;
  for (double v : big.omega.data) {
    m += v;
    m2 += v * v;
  }
  const double n = static_cast<double>(big.omega.data.size());
  m /= n;
  const double sd = std::sqrt(m2 / n - m * m);
  CHECK(std::abs(m) < 0.03);
  CHECK(sd > 0.99);
  CHECK(sd < 1.01);
}

TEST_CASE("rff_embed analytic values and unit norm") {
  RffProjection proj = sample_projection(1, 2, 1);
  proj.omega(0, 0) = 1.0;
  const Vec phi = rff_embed({std::numbers::pi / 2.0}, proj);
  // sqrt(2/K) = 1 at K = 2
  CHECK(phi[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(phi[1] == doctest::Approx(1.0).epsilon(1e-12));

  const RffProjection p64 = sample_projection(2, 64, 5);
  const Vec zero = rff_embed(Vec(5, 0.0), p64);
  for (std::size_t j = 0; j < 32; ++j) {
    CHECK(zero[j] == doctest::Approx(std::sqrt(2.0 / 64.0)).epsilon(1e-15));
    CHECK(zero[j + 32] == 0.0);
  }
  CHECK(norm2(zero) == doctest::Approx(1.0).epsilon(1e-12));

  SeededRng rng(3);
  const RffProjection pbig = sample_projection(9, 10000, 16);
  for (int i = 0; i < 20; ++i) {
    const Vec h = gaussian_vector(rng, 16, 1.0);
    CHECK(std::abs(norm2(rff_embed(h, pbig)) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(rff_embed(Vec(3, 0.0), p64), std::invalid_argument);
}

TEST_CASE("rff_embed depends on h only through the projections") {
  // two inputs differing by a vector orthogonal to every frequency row
  RffProjection proj = sample_projection(1, 4, 3);
  proj.omega(0, 0) = 1.0; proj.omega(0, 1) = 0.0; proj.omega(0, 2) = 0.0;
  proj.omega(1, 0) = 0.0; proj.omega(1, 1) = 1.0; proj.omega(1, 2) = 0.0;
  const Vec h1{0.3, -0.7, 2.0};
  const Vec h2{0.3, -0.7, -5.5};
  CHECK(rff_embed(h1, proj) == rff_embed(h2, proj));
}

TEST_CASE("mean_rff basics and brute-force oracle") {
  const RffProjection proj = sample_projection(5, 32, 6);
  SeededRng rng(4);
  const Vec h = gaussian_vector(rng, 6, 1.0);
  CHECK(mean_rff({h}, proj, 1) == rff_embed(h, proj));

  const std::vector<Vec> same(7, h);
  Vec m = mean_rff(same, proj, 7);
  const Vec phi = rff_embed(h, proj);
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK(m[i] == doctest::Approx(phi[i]).epsilon(1e-12));

  std::vector<Vec> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(gaussian_vector(rng, 6, 1.0));
  const Vec mu = mean_rff(imgs, proj, 5);
  Vec oracle(32, 0.0);
  for (const auto& im : imgs) axpy(0.2, rff_embed(im, proj), oracle);
  for (std::size_t i = 0; i < 32; ++i)
    CHECK(mu[i] == doctest::Approx(oracle[i]).epsilon(1e-12));

  CHECK(mean_rff({}, proj, 3) == Vec(32, 0.0));
  CHECK_THROWS_AS(mean_rff(imgs, proj, 4), std::invalid_argument);
}

TEST_CASE("privatize_freq noise scale") {
  SeededRng rng(6);
  const Vec mu(100000, 0.0);
  const Vec noisy = privatize_freq(mu, 26.0, 55000, rng);
  double m2 = 0.0;
  for (double v : noisy) m2 += v * v;
  const double sd = std::sqrt(m2 / static_cast<double>(noisy.size()));
  const double expect = 26.0 / 55000.0;
  CHECK(std::abs(sd - expect) / expect < 0.02);

  SeededRng rng2(6);
  CHECK(privatize_freq({0.5, 0.25}, 0.0, 10, rng2) == Vec{0.5, 0.25});
}

TEST_CASE("frequency query sensitivity never exceeds 1/n_star") {
  const RffProjection proj = sample_projection(8, 64, 16);
  SeededRng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + static_cast<std::size_t>(rng.next_double() * 25);
    std::vector<Vec> d;
    for (std::size_t i = 0; i < n; ++i) d.push_back(gaussian_vector(rng, 16, 1.0));
    std::vector<Vec> dprime = d;
    dprime.erase(dprime.begin() + static_cast<long>(rng.next_below(n)));
    Vec diff = mean_rff(d, proj, n);
    axpy(-1.0, mean_rff(dprime, proj, n), diff);
    CHECK(norm2(diff) <= 1.0 / static_cast<double>(n) + 1e-12);
  }
}

TEST_CASE("central_image_query exact cases") {
  SeededRng rng(9);
  std::vector<Vec> imgs{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.0}};
  // norms well below c_t: q=1, sigma=0 gives the exact mean
  const Vec h = central_image_query(imgs, 1.0, 10.0, 0.0, imgs.size(), rng);
  CHECK(h[0] == doctest::Approx((0.1 + 0.3 + 0.5) / 3.0).epsilon(1e-12));
  CHECK(h[1] == doctest::Approx((0.2 + 0.4 + 0.0) / 3.0).epsilon(1e-12));

  // a single image of norm 2 c_t comes back halved
  const double c_t = 0.5;
  std::vector<Vec> one{{0.6, 0.8}};  // norm 1 = 2 c_t
  const Vec clipped = central_image_query(one, 1.0, c_t, 0.0, 1, rng);
  CHECK(clipped[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(clipped[1] == doctest::Approx(0.4).epsilon(1e-12));

  CHECK_THROWS_AS(central_image_query(imgs, 0.0, 1.0, 0.0, 3, rng), std::invalid_argument);
  CHECK_THROWS_AS(central_image_query(imgs, 1.0, -1.0, 0.0, 3, rng), std::invalid_argument);
}

TEST_CASE("central query sensitivity with the differing image in-sample") {
  SeededRng rng(10);
  const double c_t = 2.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(rng.next_double() * 20);
    std::vector<Vec> d;
    for (std::size_t i = 0; i < n; ++i) d.push_back(gaussian_vector(rng, 8, 1.0));
    std::vector<Vec> dprime = d;
    dprime.pop_back();
    // q = 1 forces every image, the differing one included, into the batch
    const double b_star = 1.0 * static_cast<double>(n);
    SeededRng r1(trial), r2(trial);
    Vec diff = central_image_query(d, 1.0, c_t, 0.0, n, r1);
    axpy(-1.0, central_image_query(dprime, 1.0, c_t, 0.0, n, r2), diff);
    CHECK(norm2(diff) <= c_t / b_star + 1e-12);
  }
}

TEST_CASE("extract_features noiseless recovers class means") {
  const LabeledDataset ds = testing::toy8x8(30, 21);
  FeatureConfig fc{21, 32, 3, 0.0, 0.0, 100.0, 1.0};
  const ExtractResult r = extract_features(ds, fc);

  CHECK(r.central.images.size() == 2);
  CHECK(r.central.images[0].size() == 3);
  CHECK(r.freq.mu.size() == 2);
  CHECK(r.freq.mu[0].size() == 32);
  CHECK(r.ledger.is_infinite());  // no noise, no guarantee
  CHECK(r.specs.empty());

  const RffProjection proj = sample_projection(21, 32, ds.dim());
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<Vec> cls;
    for (auto i : ds.class_indices(c)) cls.push_back(ds.images[i]);
    Vec mean(ds.dim(), 0.0);
    for (const auto& im : cls) axpy(1.0 / static_cast<double>(cls.size()), im, mean);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < ds.dim(); ++j)
        CHECK(r.central.images[c][t][j] == doctest::Approx(mean[j]).epsilon(1e-9));
    const Vec mu = mean_rff(cls, proj, cls.size());
    for (std::size_t j = 0; j < 32; ++j)
      CHECK(r.freq.mu[c][j] == doctest::Approx(mu[j]).epsilon(1e-12));
  }
}

TEST_CASE("extract_features ledger equals the hand-composed ledger") {
  const LabeledDataset ds = testing::toy8x8(30, 22);
  FeatureConfig fc{22, 32, 50, 20.0, 26.0, 4.0, 0.11};
  const ExtractResult r = extract_features(ds, fc);
  RdpLedger hand = RdpLedger::zero();
  hand = compose(hand, SgmSpec{0.11, 20.0, 50, "spatial"});
  hand = compose(hand, SgmSpec{1.0, 26.0, 1, "frequency"});
  REQUIRE(r.ledger.gamma.size() == hand.gamma.size());
  for (std::size_t i = 0; i < hand.gamma.size(); ++i)
    CHECK(r.ledger.gamma[i] == hand.gamma[i]);
  CHECK(r.specs.size() == 2);
}

TEST_CASE("per-class layout concatenates to dimension K*C") {
  const LabeledDataset ds = testing::toy8x8(10, 23, 3);
  FeatureConfig fc{23, 16, 2, 1.0, 2.0, 4.0, 0.5};
  const ExtractResult r = extract_features(ds, fc);
  std::size_t total = 0;
  for (const auto& mu : r.freq.mu) total += mu.size();
  CHECK(total == 16 * 3);
}

TEST_CASE("extract_features rejects a class with zero images") {
  LabeledDataset ds = testing::toy8x8(5, 24);
  ds.meta.classes = 3;  // class 2 has no images
  FeatureConfig fc{24, 16, 2, 1.0, 2.0, 4.0, 0.5};
  CHECK_THROWS_AS(extract_features(ds, fc), DataError);
}

TEST_CASE("feature files round trip and reject version mismatches") {
  const fs::path dir = fs::temp_directory_path() / "feta_features_test";
  fs::remove_all(dir);
  const LabeledDataset ds = testing::toy8x8(20, 25);
  FeatureConfig fc{25, 32, 4, 3.0, 5.0, 4.0, 0.2};
  const ExtractResult r = extract_features(ds, fc);
  write_features(dir, r);

  const LoadedFeatures lf = read_features(dir);
  CHECK(lf.freq.k == 32);
  CHECK(lf.freq.classes == 2);
  CHECK(lf.freq.n_star == ds.size());
  CHECK(lf.central.n_t == 4);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 32; ++j)
      CHECK(lf.freq.mu[c][j] ==
            doctest::Approx(static_cast<float>(r.freq.mu[c][j])).epsilon(1e-12));

  // tamper with the manifest version
  std::ifstream in(dir / "features.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 12, "\"version\": 2");
  std::ofstream out(dir / "features.json");
  out << text;
  out.close();
  CHECK_THROWS_AS(read_features(dir), DataError);
}
