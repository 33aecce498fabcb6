#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "feta/accountant.hpp"
#include "feta/dataset.hpp"
#include "feta/linalg.hpp"
#include "feta/models.hpp"
#include "feta/numeric.hpp"
#include "feta/rng.hpp"

namespace feta {

struct DpSgdConfig {
  double clip = 0.0;      // C > 0
  double sigma_d = 0.0;   // noise multiplier; 0 means no privacy (ledger -> inf)
  double q_d = 0.0;       // Poisson sampling rate in (0, 1]
  std::uint64_t steps = 0;  // t_d
  double lr = 0.0;        // eta
  // The update is plain SGD exactly as the noisy-gradient equation is
  // written; Adam on the noisy gradient is opt-in.
  bool adam_on_noisy_grad = false;

  void validate() const;
};

// min{1, C/|g|_2} g; output norm <= C exactly.
Vec clip_gradient(const Vec& g, double clip);

struct DpSgdStepResult {
  double mean_loss = 0.0;       // over the realized batch, 0 when empty
  std::size_t realized_batch = 0;
};

// One noisy update: Poisson batch at rate q_d, per-sample gradients clipped
// to C, averaged by the expected batch B* = q_d * N* (never by the realized
// size), plus N(0, (sigma_d C / B*)^2) per coordinate, applied with step
// size lr. Composes one SGM(q_d, sigma_d) step onto the ledger.
DpSgdStepResult dpsgd_step(DiffusionModel& model, const LabeledDataset& dataset,
                           const DpSgdConfig& cfg, SeededRng& rng, RdpLedger& ledger,
                           AdamState* adam);

struct FinetuneStepRecord {
  std::uint64_t step = 0;
  std::size_t realized_batch = 0;
  double loss = 0.0;
  double gamma_at_alpha_star = 0.0;
  double running_epsilon = 0.0;
};

struct FinetuneResult {
  RdpLedger ledger;
  std::vector<FinetuneStepRecord> trace;
  DpPoint realized;  // from the full ledger (base + fine-tuning)
};

// Runs exactly cfg.steps dpsgd_step calls on top of base_ledger (the feature
// query costs). If target_eps is set, aborts with CalibrationError before the
// step that would push the converted epsilon past it.
FinetuneResult finetune(DiffusionModel& model, const LabeledDataset& dataset,
                        const DpSgdConfig& cfg, double delta,
                        std::optional<double> target_eps, SeededRng& rng,
                        RdpLedger base_ledger);

}  // namespace feta
