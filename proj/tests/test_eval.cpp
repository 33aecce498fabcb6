#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "feta/errors.hpp"
#include "feta/eval.hpp"
#include "feta/numeric.hpp"
#include "support/toy.hpp"

using namespace feta;

namespace {

LabeledDataset constant_ds(double value, std::size_t n = 4) {
  LabeledDataset ds;
  ds.meta = {8, 8, 1, 1};
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.push_back(Vec(64, value));
    ds.labels.push_back(0);
  }
  return ds;
}

LabeledDataset noise_ds(std::uint64_t seed, std::size_t n, std::size_t classes) {
  LabeledDataset ds;
  ds.meta = {8, 8, 1, classes};
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Vec img(64);
    for (auto& v : img) v = rng.next_double();
    ds.images.push_back(std::move(img));
    ds.labels.push_back(i % classes);
  }
  return ds;
}

// 3x3 box blur with replicated borders, applied `passes` times
LabeledDataset box_blur(const LabeledDataset& ds, int passes) {
  LabeledDataset out = ds;
  const long rows = static_cast<long>(ds.meta.rows);
  const long cols = static_cast<long>(ds.meta.cols);
  for (auto& img : out.images)
    for (int p = 0; p < passes; ++p) {
      Vec next(img.size());
      for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
          double s = 0.0;
          for (long dr = -1; dr <= 1; ++dr)
            for (long dc = -1; dc <= 1; ++dc) {
              const long rr = std::clamp(r + dr, 0L, rows - 1);
              const long cc = std::clamp(c + dc, 0L, cols - 1);
              s += img[rr * cols + cc];
            }
          next[r * cols + c] = s / 9.0;
        }
      img = std::move(next);
    }
  return out;
}

}  // namespace

TEST_CASE("rff_mmd is zero on identical sets and bounded by 2") {
  const LabeledDataset real = testing::toy8x8(30, 51);
  const RffProjection proj = sample_projection(51, 64, 64);
  const MmdReport self = rff_mmd(real, real, proj);
  CHECK(self.pooled == 0.0);
  for (double v : self.per_class) CHECK(v == 0.0);

  const LabeledDataset other = noise_ds(52, 40, 2);
  const MmdReport r = rff_mmd(other, real, proj);
  CHECK(r.pooled > 0.0);
  CHECK(r.pooled <= 2.0);
  for (double v : r.per_class) CHECK(v <= 2.0);

  // symmetric in its arguments
  const MmdReport rv = rff_mmd(real, other, proj);
  CHECK(r.pooled == doctest::Approx(rv.pooled).epsilon(1e-15));
}

TEST_CASE("rff_mmd matches a brute-force double sum on 5-image sets") {
  const LabeledDataset a = noise_ds(53, 5, 1);
  const LabeledDataset b = noise_ds(54, 5, 1);
  const RffProjection proj = sample_projection(55, 32, 64);
  const MmdReport r = rff_mmd(a, b, proj);

  Vec ma(32, 0.0), mb(32, 0.0);
  for (const auto& img : a.images) axpy(0.2, rff_embed(img, proj), ma);
  for (const auto& img : b.images) axpy(0.2, rff_embed(img, proj), mb);
  axpy(-1.0, mb, ma);
  CHECK(r.per_class[0] == doctest::Approx(norm2(ma)).epsilon(1e-12));
}

TEST_CASE("rff_mmd rejects a class absent from one side") {
  LabeledDataset a = testing::toy8x8(10, 56);
  const LabeledDataset b = testing::toy8x8(10, 57);
  for (auto& l : a.labels) l = 0;  // class 1 empty on the synth side
  CHECK_THROWS_AS(rff_mmd(a, b, sample_projection(58, 16, 64)), DataError);
}

TEST_CASE("classifier on real training data separates the toy digits") {
  const LabeledDataset train = testing::toy8x8(200, 61);
  const LabeledDataset test = testing::toy8x8(100, 62);
  CHECK(train_eval_classifier(train, test, 5) >= 0.95);
}

TEST_CASE("classifier on uniform noise sits in the chance band") {
  // A noise-trained classifier is a pseudo-random decision direction; any one
  // seed can land far from 0.5 on separable test classes, so the chance band
  // is asserted on the 5-seed mean.
  const LabeledDataset test = testing::toy8x8(250, 63);
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const LabeledDataset synth = noise_ds(64 + seed, 400, 2);
    mean += train_eval_classifier(synth, test, seed);
  }
  mean /= 5.0;
  CHECK(mean >= 0.35);
  CHECK(mean <= 0.65);
}

TEST_CASE("classifier rejects missing class coverage") {
  LabeledDataset synth = noise_ds(70, 20, 1);
  const LabeledDataset test = testing::toy8x8(10, 71);
  CHECK_THROWS_AS(train_eval_classifier(synth, test, 1), DataError);
}

TEST_CASE("shannon entropy reference values") {
  CHECK(shannon_entropy(constant_ds(0.4)) == 0.0);

  // exactly uniform 256-level histogram
  LabeledDataset uniform;
  uniform.meta = {16, 16, 1, 1};
  Vec img(256);
  for (int i = 0; i < 256; ++i) img[i] = (i + 0.5) / 256.0;
  uniform.images.push_back(img);
  uniform.labels.push_back(0);
  CHECK(shannon_entropy(uniform) == doctest::Approx(8.0).epsilon(1e-12));

  LabeledDataset two;
  two.meta = {8, 8, 1, 1};
  Vec half(64, 0.1);
  for (int i = 0; i < 32; ++i) half[i] = 0.9;
  two.images.push_back(half);
  two.labels.push_back(0);
  CHECK(shannon_entropy(two) == doctest::Approx(1.0).epsilon(1e-12));

  // bounds on arbitrary data, and constant < natural images
  const double h = shannon_entropy(noise_ds(72, 10, 1));
  CHECK(h >= 0.0);
  CHECK(h <= 8.0);
  CHECK(shannon_entropy(constant_ds(0.4)) < shannon_entropy(testing::toy8x8(50, 73)));
}

TEST_CASE("texture complexity orderings") {
  CHECK(texture_complexity(constant_ds(0.7)) == 0.0);
  CHECK(texture_complexity(noise_ds(73, 10, 1)) > 0.0);

  // sharp 2x2-block checkerboard vs a heavily blurred copy
  LabeledDataset sharp;
  sharp.meta = {16, 16, 1, 1};
  Vec img(256);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) img[r * 16 + c] = ((r / 2 + c / 2) % 2) ? 1.0 : 0.0;
  sharp.images.push_back(img);
  sharp.labels.push_back(0);
  const LabeledDataset blurred = box_blur(sharp, 30);
  CHECK(texture_complexity(sharp) >= texture_complexity(blurred));
}

TEST_CASE("eval report serializes") {
  EvalReport rep;
  rep.mmd.per_class = {0.1, 0.2};
  rep.mmd.pooled = 0.15;
  rep.accuracy = 0.9;
  const std::string j = eval_report_json(rep);
  CHECK(j.find("\"pooled\": 0.15") != std::string::npos);
  CHECK(j.find("\"accuracy\": 0.9") != std::string::npos);
}
