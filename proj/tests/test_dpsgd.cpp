#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "feta/dpsgd.hpp"
#include "feta/errors.hpp"
#include "support/toy.hpp"

using namespace feta;

namespace {

DiffusionModel tiny_model(std::size_t dim, std::size_t classes, std::uint64_t seed) {
  SeededRng rng(seed);
  return make_diffusion_model(dim, classes, {10}, 4, 3,
                              NoiseSchedule::linear(20, 1e-3, 0.05), rng);
}

LabeledDataset tiny_data(std::size_t n, std::uint64_t seed) {
  LabeledDataset ds;
  ds.meta = {2, 3, 1, 1};
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Vec img = gaussian_vector(rng, 6, 0.2);
    for (auto& v : img) v = std::clamp(v + 0.5, 0.0, 1.0);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(0);
  }
  return ds;
}

}  // namespace

TEST_CASE("clip_gradient") {
  const Vec g{3.0, 4.0};  // norm 5
  SUBCASE("norm 2C shrinks to C with direction preserved") {
    const Vec c = clip_gradient(g, 2.5);
    CHECK(norm2(c) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(c[0] / c[1] == doctest::Approx(3.0 / 4.0).epsilon(1e-15));
  }
  SUBCASE("norm below C is untouched") { CHECK(clip_gradient(g, 10.0) == g); }
  SUBCASE("zero stays zero") { CHECK(clip_gradient({0.0, 0.0}, 1.0) == Vec{0.0, 0.0}); }
  SUBCASE("hard bound on random inputs") {
    SeededRng rng(1);
    for (int i = 0; i < 100; ++i) {
      const Vec x = gaussian_vector(rng, 12, 3.0);
      CHECK(norm2(clip_gradient(x, 0.7)) <= 0.7 * (1.0 + 1e-12));
    }
  }
  CHECK_THROWS_AS(clip_gradient(g, 0.0), std::invalid_argument);
}

TEST_CASE("noise-free single-sample step reproduces eta g / B*") {
  DiffusionModel model = tiny_model(6, 1, 2);
  const DiffusionModel before = model;
  const LabeledDataset ds = tiny_data(1, 3);

  DpSgdConfig cfg;
  cfg.clip = 1e6;  // no clipping: the raw gradient passes through
  cfg.sigma_d = 0.0;
  cfg.q_d = 1.0;
  cfg.lr = 0.5;
  cfg.steps = 1;

  RdpLedger ledger = RdpLedger::zero();
  SeededRng r1(4);
  dpsgd_step(model, ds, cfg, r1, ledger, nullptr);

  // replay the internal draws: q = 1 consumes nothing, then the loss draws
  SeededRng r2(4);
  const DiffusionLoss l =
      diffusion_loss_and_grads(before, {ds.images[0]}, {0}, r2, true);
  const Vec pa = model_params(before);
  const Vec pb = model_params(model);
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i] - pb[i] == doctest::Approx(0.5 * l.per_sample[0][i]).epsilon(1e-12));
  CHECK(ledger.is_infinite());  // sigma_d = 0 has no privacy guarantee
}

TEST_CASE("update divides by the expected batch, not the realized one") {
  DiffusionModel model = tiny_model(6, 1, 5);
  const DiffusionModel before = model;
  const LabeledDataset ds = tiny_data(10, 6);

  DpSgdConfig cfg;
  cfg.clip = 0.05;
  cfg.sigma_d = 0.0;
  cfg.q_d = 0.5;  // B* = 5 whatever the draw realizes
  cfg.lr = 1.0;
  cfg.steps = 1;

  RdpLedger ledger = RdpLedger::zero();
  SeededRng r1(7);
  const DpSgdStepResult res = dpsgd_step(model, ds, cfg, r1, ledger, nullptr);

  SeededRng r2(7);
  const auto idx = poisson_subsample(r2, 10, 0.5);
  CHECK(res.realized_batch == idx.size());
  CHECK(idx.size() != 5);  // this seed realizes an unusual batch size
  std::vector<Vec> h0;
  std::vector<std::size_t> labels;
  for (auto i : idx) {
    h0.push_back(ds.images[i]);
    labels.push_back(0);
  }
  const DiffusionLoss l = diffusion_loss_and_grads(before, h0, labels, r2, true);
  Vec sum(l.grad.size(), 0.0);
  for (const auto& g : l.per_sample) axpy(1.0, clip_gradient(g, 0.05), sum);
  scale(sum, 1.0 / 5.0);

  const Vec pa = model_params(before);
  const Vec pb = model_params(model);
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i] - pb[i] == doctest::Approx(sum[i]).epsilon(1e-12));
}

TEST_CASE("empty realized batch applies a pure-noise update") {
  DiffusionModel model = tiny_model(6, 1, 8);
  const DiffusionModel before = model;
  LabeledDataset ds = tiny_data(3, 9);

  DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.sigma_d = 2.0;
  cfg.q_d = 1e-12;  // certainly empty
  cfg.lr = 1.0;
  cfg.steps = 1;

  RdpLedger ledger = RdpLedger::zero();
  SeededRng r1(10);
  const DpSgdStepResult res = dpsgd_step(model, ds, cfg, r1, ledger, nullptr);
  CHECK(res.realized_batch == 0);
  CHECK(res.mean_loss == 0.0);

  SeededRng r2(10);
  (void)poisson_subsample(r2, 3, 1e-12);
  const double b_star = 1e-12 * 3.0;
  const Vec noise = gaussian_vector(r2, model_param_count(model), 2.0 * 1.0 / b_star);
  const Vec pa = model_params(before);
  const Vec pb = model_params(model);
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i] - pb[i] == doctest::Approx(noise[i]).epsilon(1e-9));
}

TEST_CASE("ledger after k steps equals k-fold composition exactly") {
  DiffusionModel model = tiny_model(6, 1, 11);
  const LabeledDataset ds = tiny_data(8, 12);
  DpSgdConfig cfg;
  cfg.clip = 0.1;
  cfg.sigma_d = 5.0;
  cfg.q_d = 0.25;
  cfg.lr = 1e-3;
  cfg.steps = 5;

  SeededRng rng(13);
  const FinetuneResult r =
      finetune(model, ds, cfg, 1e-5, std::nullopt, rng, RdpLedger::zero());
  const RdpLedger hand = compose(RdpLedger::zero(), SgmSpec{0.25, 5.0, 5, "dpsgd"});
  REQUIRE(r.ledger.gamma.size() == hand.gamma.size());
  for (std::size_t i = 0; i < hand.gamma.size(); ++i)
    CHECK(r.ledger.gamma[i] == hand.gamma[i]);
  CHECK(r.trace.size() == 5);
}

TEST_CASE("finetune with zero steps changes nothing") {
  DiffusionModel model = tiny_model(6, 1, 14);
  const Vec before = model_params(model);
  const LabeledDataset ds = tiny_data(4, 15);
  DpSgdConfig cfg;
  cfg.clip = 0.1;
  cfg.sigma_d = 2.0;
  cfg.q_d = 0.5;
  cfg.lr = 1e-3;
  cfg.steps = 0;
  SeededRng rng(16);
  const FinetuneResult r = finetune(model, ds, cfg, 1e-5, std::nullopt, rng, RdpLedger::zero());
  CHECK(model_params(model) == before);
  for (double g : r.ledger.gamma) CHECK(g == 0.0);
}

TEST_CASE("reported epsilon equals the hand-composed conversion") {
  DiffusionModel model = tiny_model(6, 1, 17);
  const LabeledDataset ds = tiny_data(8, 18);
  DpSgdConfig cfg;
  cfg.clip = 0.1;
  cfg.sigma_d = 4.0;
  cfg.q_d = 0.25;
  cfg.lr = 1e-3;
  cfg.steps = 3;

  RdpLedger base = RdpLedger::zero();
  base = compose(base, SgmSpec{0.2, 3.0, 10, "spatial"});
  base = compose(base, SgmSpec{1.0, 5.0, 1, "frequency"});
  SeededRng rng(19);
  const FinetuneResult r = finetune(model, ds, cfg, 1e-5, std::nullopt, rng, base);

  RdpLedger hand = base;
  hand = compose(hand, SgmSpec{0.25, 4.0, 3, "dpsgd"});
  CHECK(std::abs(r.realized.epsilon - to_dp(hand, 1e-5).epsilon) < 1e-9);
}

TEST_CASE("epsilon is nondecreasing in the step count") {
  double prev = 0.0;
  for (std::uint64_t steps : {1, 2, 5, 20}) {
    RdpLedger l = compose(RdpLedger::zero(), SgmSpec{0.25, 4.0, steps, "dpsgd"});
    const double eps = to_dp(l, 1e-5).epsilon;
    CHECK(eps >= prev);
    prev = eps;
  }
}

TEST_CASE("finetune aborts before the step that would exceed the target") {
  DiffusionModel model = tiny_model(6, 1, 20);
  const LabeledDataset ds = tiny_data(4, 21);
  DpSgdConfig cfg;
  cfg.clip = 0.1;
  cfg.sigma_d = 1.0;
  cfg.q_d = 1.0;
  cfg.lr = 1e-3;
  cfg.steps = 10;
  // one step costs eps(1 step); pick a target between 2 and 3 steps
  const double eps2 =
      to_dp(compose(RdpLedger::zero(), SgmSpec{1.0, 1.0, 2, "d"}), 1e-5).epsilon;
  const double eps3 =
      to_dp(compose(RdpLedger::zero(), SgmSpec{1.0, 1.0, 3, "d"}), 1e-5).epsilon;
  SeededRng rng(22);
  CHECK_THROWS_AS(finetune(model, ds, cfg, 1e-5, 0.5 * (eps2 + eps3), rng,
                           RdpLedger::zero()),
                  CalibrationError);
}

TEST_CASE("huge noise with a tiny step size stays bounded") {
  DiffusionModel model = tiny_model(6, 1, 23);
  const LabeledDataset ds = tiny_data(16, 24);
  DpSgdConfig cfg;
  cfg.clip = 1.0;
  cfg.sigma_d = 150.0;
  cfg.q_d = 0.5;
  cfg.lr = 1e-6;
  cfg.steps = 25;
  SeededRng rng(25);
  const FinetuneResult r = finetune(model, ds, cfg, 1e-5, std::nullopt, rng, RdpLedger::zero());
  for (const auto& rec : r.trace) CHECK(std::isfinite(rec.loss));
  for (double p : model_params(model)) CHECK(std::isfinite(p));
}

TEST_CASE("adam-on-noisy-gradient mode is opt-in and runs") {
  DiffusionModel model = tiny_model(6, 1, 26);
  const Vec before = model_params(model);
  const LabeledDataset ds = tiny_data(8, 27);
  DpSgdConfig cfg;
  cfg.clip = 0.1;
  cfg.sigma_d = 2.0;
  cfg.q_d = 0.5;
  cfg.lr = 1e-3;
  cfg.steps = 3;
  cfg.adam_on_noisy_grad = true;
  SeededRng rng(28);
  finetune(model, ds, cfg, 1e-5, std::nullopt, rng, RdpLedger::zero());
  CHECK(model_params(model) != before);
}
