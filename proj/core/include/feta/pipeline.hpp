#pragma once

#include <optional>
#include <string>
#include <vector>

#include "feta/accountant.hpp"
#include "feta/config.hpp"
#include "feta/dataset.hpp"
#include "feta/dpsgd.hpp"
#include "feta/features.hpp"
#include "feta/models.hpp"

namespace feta {

struct StageTrace {
  std::string stage;
  std::vector<double> losses;
  double wall_seconds = 0.0;  // kept in memory and in timing output, never in report.json
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string order;
  double target_epsilon = 0.0;  // +inf for non-private runs
  double delta = 0.0;
  double realized_epsilon = 0.0;  // +inf when any stage ran without noise
  double realized_alpha = 0.0;
  double sigma_d = 0.0;
  std::uint64_t t_d = 0;
  std::vector<SgmSpec> mechanisms;   // every privacy-consuming mechanism of the run
  BudgetReport budget;               // empty shares when the ledger is infinite
  std::vector<StageTrace> stages;
  std::vector<FinetuneStepRecord> finetune_trace;
  double sample_entropy_bits = 0.0;      // on a small synthetic draw
  double sample_texture_bits = 0.0;
  std::string config_echo;           // canonical config JSON
};

// Serialized report. Timing is deliberately excluded so reruns with the same
// seed are byte-identical; timing_json carries it separately.
std::string run_report_json(const RunReport& report);
std::string timing_json(const RunReport& report);
std::string finetune_trace_json_lines(const RunReport& report);

struct CurriculumResult {
  DiffusionModel model;
  RunReport report;
};

// Executes the configured order end-to-end: feature extraction, warm-up
// stages on the privatized artifacts only, then DP-SGD fine-tuning as the
// single stage that touches the sensitive dataset.
CurriculumResult run_curriculum(const CurriculumConfig& cfg, const LabeledDataset& dataset);

// Same, but consuming previously extracted features (the `train` CLI path).
CurriculumResult run_curriculum_with_features(const CurriculumConfig& cfg,
                                              const LabeledDataset& dataset,
                                              const LoadedFeatures& features);

struct SweepCell {
  double sigma_t = 0.0;
  double sigma_f = 0.0;
  bool feasible = false;
  std::string error;  // set when the cell failed
  RunReport report;
  double pooled_mmd = 0.0;
  double accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // row-major over sigma_t x sigma_f
  std::vector<double> sigma_t_grid;
  std::vector<double> sigma_f_grid;
};

// One run per (sigma_t, sigma_f) cell at the same total target epsilon.
// Infeasible cells are recorded, not fatal. Cells run on a small worker pool
// (capped by FETA_THREADS) with RNG streams keyed by (seed, cell coords), so
// results are independent of scheduling.
SweepResult allocation_sweep(const CurriculumConfig& base,
                             const std::vector<double>& sigma_t_grid,
                             const std::vector<double>& sigma_f_grid,
                             const LabeledDataset& dataset,
                             const LabeledDataset* eval_set);

std::string sweep_summary_text(const SweepResult& sweep);
std::string sweep_budget_table_text(const SweepResult& sweep);
std::string sweep_json(const SweepResult& sweep);

}  // namespace feta
