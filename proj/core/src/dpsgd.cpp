#include "feta/dpsgd.hpp"

#include <cmath>
#include <stdexcept>

#include "feta/errors.hpp"

namespace feta {

void DpSgdConfig::validate() const {
  if (!(clip > 0.0)) throw std::invalid_argument("dpsgd: clip norm must be > 0");
  if (!(sigma_d >= 0.0)) throw std::invalid_argument("dpsgd: sigma_d must be >= 0");
  if (!(q_d > 0.0 && q_d <= 1.0)) throw std::invalid_argument("dpsgd: q_d must be in (0, 1]");
  if (!(lr > 0.0)) throw std::invalid_argument("dpsgd: lr must be > 0");
}

Vec clip_gradient(const Vec& g, double clip) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip_gradient: clip must be > 0");
  const double n = norm2(g);
  Vec out = g;
  if (n > clip) scale(out, clip / n);
  return out;
}

DpSgdStepResult dpsgd_step(DiffusionModel& model, const LabeledDataset& dataset,
                           const DpSgdConfig& cfg, SeededRng& rng, RdpLedger& ledger,
                           AdamState* adam) {
  cfg.validate();
  const double b_star = cfg.q_d * static_cast<double>(dataset.n_star());
  if (!(b_star > 0.0)) throw std::invalid_argument("dpsgd: B* must be > 0");

  const auto idx = poisson_subsample(rng, dataset.size(), cfg.q_d);
  const std::size_t np = model_param_count(model);

  DpSgdStepResult res;
  res.realized_batch = idx.size();
  Vec sum(np, 0.0);
  if (!idx.empty()) {
    std::vector<Vec> h0;
    std::vector<std::size_t> labels;
    h0.reserve(idx.size());
    for (auto i : idx) {
      h0.push_back(dataset.images[i]);
      labels.push_back(dataset.labels[i]);
    }
    const DiffusionLoss l = diffusion_loss_and_grads(model, h0, labels, rng, true);
    res.mean_loss = l.total_loss / static_cast<double>(idx.size());
    for (const auto& g : l.per_sample) axpy(1.0, clip_gradient(g, cfg.clip), sum);
  }
  scale(sum, 1.0 / b_star);
  if (cfg.sigma_d > 0.0)
    axpy(1.0, gaussian_vector(rng, np, cfg.sigma_d * cfg.clip / b_star), sum);

  for (double v : sum)
    if (!std::isfinite(v)) throw DivergenceError("dpsgd: non-finite update");

  Vec params = model_params(model);
  if (adam) {
    adam_step(params, sum, *adam, cfg.lr);
  } else {
    axpy(-cfg.lr, sum, params);
  }
  set_model_params(model, params);

  if (cfg.sigma_d > 0.0)
    ledger = compose(ledger, SgmSpec{cfg.q_d, cfg.sigma_d, 1, "dpsgd"});
  else
    ledger = RdpLedger::infinite(ledger.grid);
  return res;
}

FinetuneResult finetune(DiffusionModel& model, const LabeledDataset& dataset,
                        const DpSgdConfig& cfg, double delta,
                        std::optional<double> target_eps, SeededRng& rng,
                        RdpLedger base_ledger) {
  cfg.validate();
  dataset.validate_for_training();

  FinetuneResult out;
  out.ledger = std::move(base_ledger);
  AdamState adam = make_adam(model_param_count(model));

  // The per-step cost is identical every step, so the epsilon trajectory is
  // known up front; the abort check just compares against it.
  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    if (target_eps) {
      RdpLedger next = cfg.sigma_d > 0.0
                           ? compose(out.ledger, SgmSpec{cfg.q_d, cfg.sigma_d, 1, "dpsgd"})
                           : RdpLedger::infinite(out.ledger.grid);
      if (to_dp(next, delta).epsilon > *target_eps)
        throw CalibrationError("finetune: step " + std::to_string(step + 1) +
                               " would exceed the target epsilon");
    }
    const DpSgdStepResult r = dpsgd_step(model, dataset, cfg, rng, out.ledger,
                                         cfg.adam_on_noisy_grad ? &adam : nullptr);
    const DpPoint pt = to_dp(out.ledger, delta);
    std::size_t ai = 0;
    while (out.ledger.grid.orders[ai] != pt.alpha) ++ai;
    out.trace.push_back(FinetuneStepRecord{step + 1, r.realized_batch, r.mean_loss,
                                           out.ledger.gamma[ai], pt.epsilon});
  }
  out.realized = to_dp(out.ledger, delta);
  return out;
}

}  // namespace feta
