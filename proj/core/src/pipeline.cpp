#include "feta/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "feta/errors.hpp"
#include "feta/eval.hpp"
#include "feta/numeric.hpp"

namespace feta {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool wants_spatial(CurriculumOrder o) {
  return o == CurriculumOrder::kSpatialThenFrequency ||
         o == CurriculumOrder::kFrequencyThenSpatial || o == CurriculumOrder::kMixed ||
         o == CurriculumOrder::kSpatialOnly;
}

bool wants_frequency(CurriculumOrder o) {
  return o == CurriculumOrder::kSpatialThenFrequency ||
         o == CurriculumOrder::kFrequencyThenSpatial || o == CurriculumOrder::kMixed ||
         o == CurriculumOrder::kFrequencyOnly;
}

// Warm-up pool: images already privatized, clamped into [0,1] for Eq-style
// diffusion training.
struct TrainPool {
  std::vector<Vec> images;
  std::vector<std::size_t> labels;
};

TrainPool pool_from_central(const CentralImageSet& central) {
  TrainPool p;
  for (std::size_t c = 0; c < central.classes; ++c)
    for (const auto& img : central.images[c]) {
      Vec v = img;
      for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
      p.images.push_back(std::move(v));
      p.labels.push_back(c);
    }
  return p;
}

TrainPool pool_from_dataset(const LabeledDataset& ds) {
  return TrainPool{ds.images, ds.labels};
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  return std::max<std::size_t>(1, (n + batch - 1) / batch);
}

double plain_train_step(DiffusionModel& model, const TrainPool& pool, std::size_t batch,
                        double lr, AdamState& opt, SeededRng& rng) {
  const std::size_t bs = std::min(batch, pool.images.size());
  std::vector<Vec> h0;
  std::vector<std::size_t> labels;
  h0.reserve(bs);
  for (std::size_t b = 0; b < bs; ++b) {
    const std::size_t i = rng.next_below(pool.images.size());
    h0.push_back(pool.images[i]);
    labels.push_back(pool.labels[i]);
  }
  DiffusionLoss l = diffusion_loss_and_grads(model, h0, labels, rng, false);
  scale(l.grad, 1.0 / static_cast<double>(bs));
  Vec params = model_params(model);
  adam_step(params, l.grad, opt, lr);
  set_model_params(model, params);
  return l.total_loss / static_cast<double>(bs);
}

StageTrace train_plain(DiffusionModel& model, const TrainPool& pool, std::size_t epochs,
                       std::size_t batch, double lr, SeededRng& rng,
                       const std::string& stage) {
  const auto start = Clock::now();
  StageTrace trace;
  trace.stage = stage;
  AdamState opt = make_adam(model_param_count(model));
  const std::size_t steps = epochs * steps_per_epoch(pool.images.size(), batch);
  for (std::size_t s = 0; s < steps; ++s)
    trace.losses.push_back(plain_train_step(model, pool, batch, lr, opt, rng));
  trace.wall_seconds = seconds_since(start);
  return trace;
}

StageTrace train_mixed(DiffusionModel& model, const TrainPool& spatial,
                       const TrainPool& freq, const CurriculumConfig& cfg,
                       SeededRng& rng) {
  const auto start = Clock::now();
  StageTrace trace;
  trace.stage = "warmup_mixed";
  AdamState opt = make_adam(model_param_count(model));
  std::size_t s_left = cfg.spatial_epochs * steps_per_epoch(spatial.images.size(), cfg.spatial_batch);
  std::size_t f_left = cfg.freq_epochs * steps_per_epoch(freq.images.size(), cfg.freq_batch);
  bool spatial_turn = true;
  while (s_left > 0 || f_left > 0) {
    const bool do_spatial = (spatial_turn && s_left > 0) || f_left == 0;
    if (do_spatial) {
      trace.losses.push_back(
          plain_train_step(model, spatial, cfg.spatial_batch, cfg.spatial_lr, opt, rng));
      --s_left;
    } else {
      trace.losses.push_back(
          plain_train_step(model, freq, cfg.freq_batch, cfg.freq_lr, opt, rng));
      --f_left;
    }
    spatial_turn = !spatial_turn;
  }
  trace.wall_seconds = seconds_since(start);
  return trace;
}

void check_feature_consistency(const CurriculumConfig& cfg, const LoadedFeatures& f,
                               const LabeledDataset& ds) {
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); };
  if (f.freq.k != cfg.k || f.central.n_t != cfg.n_t || !close(f.freq.sigma_f, cfg.sigma_f) ||
      !close(f.central.sigma_t, cfg.sigma_t) || !close(f.central.c_t, cfg.c_t) ||
      !close(f.central.q_t, cfg.q_t))
    throw ConfigError("features on disk disagree with the config");
  if (f.freq.d != ds.dim() || f.freq.classes != ds.meta.classes)
    throw ConfigError("features on disk disagree with the dataset shape");
}

CurriculumResult run_impl(const CurriculumConfig& cfg, const LabeledDataset& dataset,
                          const LoadedFeatures* pre_extracted) {
  cfg.validate();
  dataset.validate_for_training();
  if (cfg.rows != 0 && (cfg.rows != dataset.meta.rows || cfg.cols != dataset.meta.cols ||
                        cfg.channels != dataset.meta.channels))
    throw ConfigError("config geometry disagrees with the dataset");

  const bool need_spatial = wants_spatial(cfg.order);
  const bool need_freq = wants_frequency(cfg.order);
  const bool is_private = cfg.target_epsilon.has_value();
  if (is_private) {
    if (need_spatial && !(cfg.sigma_t > 0.0))
      throw ConfigError("private run: sigma_t must be > 0 when spatial features are used");
    if (need_freq && !(cfg.sigma_f > 0.0))
      throw ConfigError("private run: sigma_f must be > 0 when frequency features are used");
  }

  const SeededRng root(cfg.seed);
  RunReport report;
  report.seed = cfg.seed;
  report.order = order_name(cfg.order);
  report.delta = cfg.target_delta;
  report.target_epsilon =
      is_private ? *cfg.target_epsilon : std::numeric_limits<double>::infinity();
  report.config_echo = curriculum_config_json(cfg);

  // ---- feature extraction ----------------------------------------------
  const FeatureConfig fc{cfg.seed, cfg.k, cfg.n_t, cfg.sigma_t, cfg.sigma_f,
                         cfg.c_t, cfg.q_t};
  CentralImageSet central;
  FrequencyFeatureSet freq;
  {
    const auto start = Clock::now();
    if (pre_extracted) {
      check_feature_consistency(cfg, *pre_extracted, dataset);
      central = pre_extracted->central;
      freq = pre_extracted->freq;
    } else {
      if (need_spatial) central = extract_spatial(dataset, fc, root);
      if (need_freq) freq = extract_frequency(dataset, fc, root);
    }
    StageTrace t;
    t.stage = "extract";
    t.wall_seconds = seconds_since(start);
    report.stages.push_back(std::move(t));
  }

  std::vector<SgmSpec> fixed;
  bool noiseless_stage = false;
  if (need_spatial) {
    if (cfg.sigma_t > 0.0)
      fixed.push_back(SgmSpec{cfg.q_t, cfg.sigma_t, cfg.n_t, "spatial"});
    else
      noiseless_stage = true;
  }
  if (need_freq) {
    if (cfg.sigma_f > 0.0)
      fixed.push_back(SgmSpec{1.0, cfg.sigma_f, 1, "frequency"});
    else
      noiseless_stage = true;
  }

  // ---- calibration -------------------------------------------------------
  const std::uint64_t t_d = cfg.finetune_steps();
  report.t_d = t_d;
  double sigma_d = cfg.sigma_d;
  if (is_private && t_d > 0) {
    RdpLedger fixed_ledger = RdpLedger::zero();
    for (const auto& s : fixed) fixed_ledger = compose(fixed_ledger, s);
    const double fixed_eps = to_dp(fixed_ledger, cfg.target_delta).epsilon;
    if (fixed_eps > 0.95 * *cfg.target_epsilon)
      throw CalibrationError(
          "feature queries consume more than 95% of the target epsilon; raise "
          "sigma_t / sigma_f");
    sigma_d = calibrate_sigma_d(*cfg.target_epsilon, cfg.target_delta, fixed, cfg.q_d, t_d);
  }
  report.sigma_d = sigma_d;
  if (is_private && !(sigma_d > 0.0) && t_d > 0)
    throw ConfigError("private run requires sigma_d > 0");

  // ---- model -------------------------------------------------------------
  SeededRng init_rng = root.derive("model-init");
  DiffusionModel model = make_diffusion_model(
      dataset.dim(), dataset.meta.classes, cfg.denoiser_hidden, cfg.time_embed_dim,
      cfg.class_embed_dim,
      NoiseSchedule::linear(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max), init_rng);

  // ---- warm-up stages (privatized artifacts only) ------------------------
  const auto spatial_stage = [&]() {
    SeededRng rng = root.derive("warmup-spatial");
    const TrainPool pool = pool_from_central(central);
    report.stages.push_back(train_plain(model, pool, cfg.spatial_epochs,
                                        cfg.spatial_batch, cfg.spatial_lr, rng,
                                        "warmup_spatial"));
  };
  const auto frequency_stage = [&]() {
    const auto start = Clock::now();
    SeededRng gen_rng = root.derive("gen-train");
    SeededRng gen_init = root.derive("gen-init");
    const RffProjection proj = sample_projection(freq.seed, freq.k, freq.d);
    Generator gen = make_generator(cfg.z_dim, dataset.dim(), dataset.meta.classes,
                                   cfg.gen_hidden, cfg.gen_class_embed_dim, gen_init);
    GenTrainResult gt = train_generator(std::move(gen), freq, proj, cfg.gen_epochs,
                                        cfg.gen_steps_per_epoch, cfg.gen_batch,
                                        cfg.gen_lr, gen_rng);
    StageTrace aux;
    aux.stage = "generator";
    aux.losses = gt.trace;
    aux.wall_seconds = seconds_since(start);
    report.stages.push_back(std::move(aux));

    SeededRng sample_rng = root.derive("gen-sample");
    const LabeledDataset d_f =
        generate_frequency_dataset(gt.gen, cfg.n_f, {}, dataset.meta, sample_rng);
    SeededRng rng = root.derive("warmup-freq");
    report.stages.push_back(train_plain(model, pool_from_dataset(d_f), cfg.freq_epochs,
                                        cfg.freq_batch, cfg.freq_lr, rng, "warmup_freq"));
  };

  try {
    switch (cfg.order) {
      case CurriculumOrder::kSpatialThenFrequency:
        spatial_stage();
        frequency_stage();
        break;
      case CurriculumOrder::kFrequencyThenSpatial:
        frequency_stage();
        spatial_stage();
        break;
      case CurriculumOrder::kSpatialOnly:
        spatial_stage();
        break;
      case CurriculumOrder::kFrequencyOnly:
        frequency_stage();
        break;
      case CurriculumOrder::kMixed: {
        const auto start = Clock::now();
        SeededRng gen_rng = root.derive("gen-train");
        SeededRng gen_init = root.derive("gen-init");
        const RffProjection proj = sample_projection(freq.seed, freq.k, freq.d);
        Generator gen = make_generator(cfg.z_dim, dataset.dim(), dataset.meta.classes,
                                       cfg.gen_hidden, cfg.gen_class_embed_dim, gen_init);
        GenTrainResult gt = train_generator(std::move(gen), freq, proj, cfg.gen_epochs,
                                            cfg.gen_steps_per_epoch, cfg.gen_batch,
                                            cfg.gen_lr, gen_rng);
        StageTrace aux;
        aux.stage = "generator";
        aux.losses = gt.trace;
        aux.wall_seconds = seconds_since(start);
        report.stages.push_back(std::move(aux));
        SeededRng sample_rng = root.derive("gen-sample");
        const LabeledDataset d_f =
            generate_frequency_dataset(gt.gen, cfg.n_f, {}, dataset.meta, sample_rng);
        SeededRng rng = root.derive("warmup-mixed");
        report.stages.push_back(
            train_mixed(model, pool_from_central(central), pool_from_dataset(d_f), cfg, rng));
        break;
      }
      case CurriculumOrder::kNone:
        break;
    }
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string("warm-up stage diverged: ") + e.what());
  }

  // ---- DP-SGD fine-tuning (sole consumer of the sensitive dataset) -------
  RdpLedger base = noiseless_stage ? RdpLedger::infinite() : RdpLedger::zero();
  if (!noiseless_stage)
    for (const auto& s : fixed) base = compose(base, s);

  report.mechanisms = fixed;
  if (t_d > 0) {
    const auto start = Clock::now();
    DpSgdConfig dcfg;
    dcfg.clip = cfg.clip_norm;
    dcfg.sigma_d = sigma_d;
    dcfg.q_d = cfg.q_d;
    dcfg.steps = t_d;
    dcfg.lr = cfg.finetune_lr;
    dcfg.adam_on_noisy_grad = cfg.finetune_adam;
    SeededRng rng = root.derive("finetune");
    std::optional<double> target =
        is_private ? std::optional<double>(*cfg.target_epsilon) : std::nullopt;
    try {
      FinetuneResult fr = finetune(model, dataset, dcfg, cfg.target_delta, target, rng,
                                   std::move(base));
      report.finetune_trace = std::move(fr.trace);
      report.realized_epsilon = fr.realized.epsilon;
      report.realized_alpha = fr.realized.alpha;
      base = std::move(fr.ledger);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string("fine-tuning diverged: ") + e.what());
    }
    if (sigma_d > 0.0) report.mechanisms.push_back(SgmSpec{cfg.q_d, sigma_d, t_d, "dpsgd"});
    StageTrace t;
    t.stage = "finetune";
    t.wall_seconds = seconds_since(start);
    for (const auto& r : report.finetune_trace) t.losses.push_back(r.loss);
    report.stages.push_back(std::move(t));
  } else {
    const DpPoint pt = to_dp(base, cfg.target_delta);
    report.realized_epsilon = pt.epsilon;
    report.realized_alpha = pt.alpha;
  }

  if (!base.is_infinite() && !report.mechanisms.empty())
    report.budget = budget_ratios(report.mechanisms, cfg.target_delta);

  // ---- synthetic sample metrics ------------------------------------------
  {
    SeededRng rng = root.derive("report-sample");
    LabeledDataset sample;
    sample.meta = dataset.meta;
    for (std::size_t c = 0; c < dataset.meta.classes; ++c)
      for (auto& img : sample_images(model, 25, c, rng)) {
        sample.images.push_back(std::move(img));
        sample.labels.push_back(c);
      }
    report.sample_entropy_bits = shannon_entropy(sample);
    report.sample_texture_bits = texture_complexity(sample);
  }

  return CurriculumResult{std::move(model), std::move(report)};
}

}  // namespace

CurriculumResult run_curriculum(const CurriculumConfig& cfg, const LabeledDataset& dataset) {
  return run_impl(cfg, dataset, nullptr);
}

CurriculumResult run_curriculum_with_features(const CurriculumConfig& cfg,
                                              const LabeledDataset& dataset,
                                              const LoadedFeatures& features) {
  return run_impl(cfg, dataset, &features);
}

namespace {

nlohmann::json spec_json(const SgmSpec& s) {
  return nlohmann::json{{"label", s.label}, {"q", s.q}, {"sigma", s.sigma}, {"steps", s.steps}};
}

nlohmann::json report_json_impl(const RunReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    nlohmann::json js{{"stage", s.stage}, {"steps", s.losses.size()}};
    if (!s.losses.empty()) {
      js["first_loss"] = s.losses.front();
      js["last_loss"] = s.losses.back();
    }
    stages.push_back(std::move(js));
  }
  nlohmann::json mechs = nlohmann::json::array();
  for (const auto& m : r.mechanisms) mechs.push_back(spec_json(m));
  nlohmann::json shares = nlohmann::json::array();
  for (const auto& s : r.budget.shares)
    shares.push_back(nlohmann::json{{"label", s.label}, {"gamma", s.gamma}, {"share", s.share}});

  nlohmann::json j{{"seed", r.seed},
                   {"order", r.order},
                   {"delta", r.delta},
                   {"sigma_d", r.sigma_d},
                   {"t_d", r.t_d},
                   {"realized_alpha", r.realized_alpha},
                   {"mechanisms", mechs},
                   {"budget_alpha_star", r.budget.alpha_star},
                   {"budget_shares", shares},
                   {"stages", stages},
                   {"sample_entropy_bits", r.sample_entropy_bits},
                   {"sample_texture_bits", r.sample_texture_bits},
                   {"config", nlohmann::json::parse(r.config_echo)}};
  // JSON has no infinity; non-private runs serialize epsilon as null.
  if (std::isfinite(r.target_epsilon))
    j["target_epsilon"] = r.target_epsilon;
  else
    j["target_epsilon"] = nullptr;
  if (std::isfinite(r.realized_epsilon))
    j["realized_epsilon"] = r.realized_epsilon;
  else
    j["realized_epsilon"] = nullptr;
  return j;
}

}  // namespace

std::string run_report_json(const RunReport& report) {
  return report_json_impl(report).dump(2) + "\n";
}

std::string timing_json(const RunReport& report) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : report.stages)
    stages.push_back(nlohmann::json{{"stage", s.stage}, {"wall_seconds", s.wall_seconds}});
  return nlohmann::json{{"timing", stages}}.dump(2) + "\n";
}

std::string finetune_trace_json_lines(const RunReport& report) {
  std::ostringstream out;
  for (const auto& r : report.finetune_trace) {
    nlohmann::json j{{"step", r.step},
                     {"realized_batch", r.realized_batch},
                     {"loss", r.loss},
                     {"gamma_at_alpha_star", r.gamma_at_alpha_star}};
    if (std::isfinite(r.running_epsilon))
      j["running_epsilon"] = r.running_epsilon;
    else
      j["running_epsilon"] = nullptr;
    out << j.dump() << "\n";
  }
  return out.str();
}

SweepResult allocation_sweep(const CurriculumConfig& base,
                             const std::vector<double>& sigma_t_grid,
                             const std::vector<double>& sigma_f_grid,
                             const LabeledDataset& dataset,
                             const LabeledDataset* eval_set) {
  if (sigma_t_grid.empty() || sigma_f_grid.empty())
    throw std::invalid_argument("allocation_sweep: empty grid");

  SweepResult sweep;
  sweep.sigma_t_grid = sigma_t_grid;
  sweep.sigma_f_grid = sigma_f_grid;
  sweep.cells.resize(sigma_t_grid.size() * sigma_f_grid.size());

  const SeededRng sweep_root = SeededRng(base.seed).derive("sweep");
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= sweep.cells.size()) return;
      const std::size_t i = idx / sigma_f_grid.size();
      const std::size_t j = idx % sigma_f_grid.size();
      SweepCell& cell = sweep.cells[idx];
      cell.sigma_t = sigma_t_grid[i];
      cell.sigma_f = sigma_f_grid[j];
      CurriculumConfig cfg = base;
      cfg.sigma_t = cell.sigma_t;
      cfg.sigma_f = cell.sigma_f;
      // isolated stream per cell, keyed by (master seed, cell coordinates)
      SeededRng cell_rng = sweep_root.derive(i).derive(j);
      cfg.seed = cell_rng.next_u64();
      try {
        CurriculumResult res = run_curriculum(cfg, dataset);
        cell.report = std::move(res.report);
        cell.feasible = true;

        SeededRng eval_rng = cell_rng.derive("eval");
        LabeledDataset synth;
        synth.meta = dataset.meta;
        const std::size_t per_class =
            std::max<std::size_t>(1, 200 / dataset.meta.classes);
        for (std::size_t c = 0; c < dataset.meta.classes; ++c)
          for (auto& img : sample_images(res.model, per_class, c, eval_rng)) {
            synth.images.push_back(std::move(img));
            synth.labels.push_back(c);
          }
        const RffProjection proj = sample_projection(base.seed, cfg.k, dataset.dim());
        cell.pooled_mmd = rff_mmd(synth, dataset, proj).pooled;
        cell.accuracy = train_eval_classifier(synth, eval_set ? *eval_set : dataset,
                                              cell_rng.derive("clf").next_u64());
      } catch (const std::exception& e) {
        cell.feasible = false;
        cell.error = e.what();
      }
    }
  };

  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FETA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) threads = static_cast<std::size_t>(v);
  }
  threads = std::min(threads, sweep.cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return sweep;
}

std::string sweep_summary_text(const SweepResult& sweep) {
  std::ostringstream out;
  out << "acc / pooled rff-mmd by (sigma_t rows x sigma_f cols)\n";
  out << "sigma_t\\sigma_f";
  for (double sf : sweep.sigma_f_grid) out << "\t" << sf;
  out << "\n";
  for (std::size_t i = 0; i < sweep.sigma_t_grid.size(); ++i) {
    out << sweep.sigma_t_grid[i];
    for (std::size_t j = 0; j < sweep.sigma_f_grid.size(); ++j) {
      const auto& c = sweep.cells[i * sweep.sigma_f_grid.size() + j];
      if (!c.feasible) {
        out << "\tinfeasible";
      } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "\t%.3f/%.3f", c.accuracy, c.pooled_mmd);
        out << buf;
      }
    }
    out << "\n";
  }
  return out.str();
}

std::string sweep_budget_table_text(const SweepResult& sweep) {
  std::ostringstream out;
  out << "budget shares %% (spatial/frequency/dpsgd) per cell\n";
  for (std::size_t i = 0; i < sweep.sigma_t_grid.size(); ++i) {
    for (std::size_t j = 0; j < sweep.sigma_f_grid.size(); ++j) {
      const auto& c = sweep.cells[i * sweep.sigma_f_grid.size() + j];
      out << "sigma_t=" << sweep.sigma_t_grid[i] << " sigma_f=" << sweep.sigma_f_grid[j]
          << ": ";
      if (!c.feasible) {
        out << "infeasible (" << c.error << ")\n";
        continue;
      }
      bool first = true;
      for (const auto& s : c.report.budget.shares) {
        if (!first) out << " / ";
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%s %.2f%%", s.label.c_str(), 100.0 * s.share);
        out << buf;
        first = false;
      }
      out << "  (alpha*=" << c.report.budget.alpha_star
          << ", sigma_d=" << c.report.sigma_d << ")\n";
    }
  }
  return out.str();
}

std::string sweep_json(const SweepResult& sweep) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : sweep.cells) {
    nlohmann::json j{{"sigma_t", c.sigma_t},
                     {"sigma_f", c.sigma_f},
                     {"feasible", c.feasible}};
    if (c.feasible) {
      j["pooled_mmd"] = c.pooled_mmd;
      j["accuracy"] = c.accuracy;
      j["report"] = nlohmann::json::parse(run_report_json(c.report));
    } else {
      j["error"] = c.error;
    }
    cells.push_back(std::move(j));
  }
  return nlohmann::json{{"sigma_t_grid", sweep.sigma_t_grid},
                        {"sigma_f_grid", sweep.sigma_f_grid},
                        {"cells", cells}}
             .dump(2) +
         "\n";
}

}  // namespace feta
