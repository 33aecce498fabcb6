// feta: differentially private image synthesis at desk scale.
//
// Exit codes: 0 ok, 2 config/schema error, 3 data error, 4 infeasible
// calibration, 5 missing prerequisite, 6 stage divergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "feta/accountant.hpp"
#include "feta/config.hpp"
#include "feta/dataset.hpp"
#include "feta/dpsgd.hpp"
#include "feta/errors.hpp"
#include "feta/eval.hpp"
#include "feta/features.hpp"
#include "feta/models.hpp"
#include "feta/pipeline.hpp"

namespace fs = std::filesystem;
using namespace feta;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCalibration = 4;
constexpr int kExitPrerequisite = 5;
constexpr int kExitDivergence = 6;

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CalibrationError& e) {
    std::cerr << "calibration error: " << e.what() << "\n";
    return kExitCalibration;
  } catch (const PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return kExitPrerequisite;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

std::string resolve(const std::string& flag, const std::string& from_config,
                    const char* what) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  throw ConfigError(std::string("no ") + what + " given (flag or config paths entry)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma_t, sigma_f, target_eps;
  std::optional<std::string> order;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--sigma-t", sigma_t, "Override sigma_t");
    cmd->add_option("--sigma-f", sigma_f, "Override sigma_f");
    cmd->add_option("--target-eps", target_eps, "Override the target epsilon");
    cmd->add_option("--order", order, "Override the curriculum order");
  }
  void apply(CurriculumConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (sigma_t) cfg.sigma_t = *sigma_t;
    if (sigma_f) cfg.sigma_f = *sigma_f;
    if (target_eps) cfg.target_epsilon = *target_eps;
    if (order) cfg.order = order_from_name(*order);
    cfg.validate();
  }
};

LabeledDataset load_data_dir(const std::string& dir, const std::string& images,
                             const std::string& labels) {
  return load_idx(fs::path(dir) / images, fs::path(dir) / labels);
}

// One row per alpha: per-mechanism gamma, total, converted epsilon.
std::string ledger_table_text(const std::vector<SgmSpec>& specs, double delta) {
  RdpLedger total = RdpLedger::zero();
  std::vector<RdpLedger> per;
  for (const auto& s : specs) {
    per.push_back(compose(RdpLedger::zero(), s));
    total = compose(total, s);
  }
  const DpPoint pt = to_dp(total, delta);
  const BudgetReport budget = budget_ratios(specs, delta);

  std::ostringstream out;
  out << "alpha";
  for (const auto& s : specs) out << "\t" << (s.label.empty() ? "gamma" : s.label);
  out << "\ttotal\teps(alpha)\n";
  for (std::size_t i = 0; i < total.grid.orders.size(); ++i) {
    char buf[64];
    out << total.grid.orders[i];
    for (const auto& l : per) {
      std::snprintf(buf, sizeof(buf), "\t%.6g", l.gamma[i]);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%.6g", total.gamma[i]);
    out << buf;
    std::snprintf(buf, sizeof(buf), "\t%.6g",
                  total.gamma[i] + std::log(1.0 / delta) / (total.grid.orders[i] - 1.0));
    out << buf << "\n";
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "converted: epsilon = %.6f at alpha* = %g (delta = %g)\n", pt.epsilon,
                pt.alpha, delta);
  out << buf;
  out << "shares at alpha*:";
  for (const auto& s : budget.shares) {
    std::snprintf(buf, sizeof(buf), " %s %.4f%%", s.label.c_str(), 100.0 * s.share);
    out << buf;
  }
  out << "\n";
  return out.str();
}

std::string ledger_table_json(const std::vector<SgmSpec>& specs, double delta) {
  RdpLedger total = RdpLedger::zero();
  for (const auto& s : specs) total = compose(total, s);
  const DpPoint pt = to_dp(total, delta);
  const BudgetReport budget = budget_ratios(specs, delta);
  std::ostringstream out;
  out << "{\n  \"delta\": " << delta << ",\n  \"epsilon\": " << pt.epsilon
      << ",\n  \"alpha_star\": " << pt.alpha << ",\n  \"mechanisms\": [";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out << ",";
    out << "\n    {\"label\": \"" << specs[i].label << "\", \"q\": " << specs[i].q
        << ", \"sigma\": " << specs[i].sigma << ", \"steps\": " << specs[i].steps
        << ", \"share\": " << budget.shares[i].share << "}";
  }
  out << "\n  ],\n  \"gamma\": {";
  for (std::size_t i = 0; i < total.grid.orders.size(); ++i) {
    if (i) out << ", ";
    out << "\"" << total.grid.orders[i] << "\": " << total.gamma[i];
  }
  out << "}\n}\n";
  return out.str();
}

// The three pipeline mechanisms implied by a config, with sigma_d calibrated
// when a target epsilon is set.
std::vector<SgmSpec> config_mechanisms(const CurriculumConfig& cfg, double* sigma_d_out) {
  const std::uint64_t t_d = cfg.finetune_steps();
  std::vector<SgmSpec> fixed;
  if (!(cfg.sigma_t > 0.0) || !(cfg.sigma_f > 0.0))
    throw ConfigError("account: sigma_t and sigma_f must be > 0");
  fixed.push_back(SgmSpec{cfg.q_t, cfg.sigma_t, cfg.n_t, "spatial"});
  fixed.push_back(SgmSpec{1.0, cfg.sigma_f, 1, "frequency"});
  double sigma_d = cfg.sigma_d;
  if (cfg.target_epsilon)
    sigma_d = calibrate_sigma_d(*cfg.target_epsilon, cfg.target_delta, fixed, cfg.q_d, t_d);
  else if (!(sigma_d > 0.0))
    throw ConfigError("account: need either target_epsilon or sigma_d > 0");
  fixed.push_back(SgmSpec{cfg.q_d, sigma_d, t_d, "dpsgd"});
  if (sigma_d_out) *sigma_d_out = sigma_d;
  return fixed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feta: differentially private image synthesis toolkit"};
  app.require_subcommand(1);

  // ---- toydata ----
  auto* toy = app.add_subcommand("toydata", "Write a procedural glyph dataset as IDX files");
  std::string toy_out;
  std::size_t toy_per_class = 500, toy_test_per_class = 250, toy_classes = 2, toy_size = 16,
              toy_downscale = 1;
  std::uint64_t toy_seed = 7;
  toy->add_option("--out", toy_out, "Output directory")->required();
  toy->add_option("--per-class", toy_per_class, "Training images per class");
  toy->add_option("--test-per-class", toy_test_per_class, "Test images per class");
  toy->add_option("--classes", toy_classes, "Number of classes (<= 10)");
  toy->add_option("--size", toy_size, "Canvas size in pixels");
  toy->add_option("--downscale", toy_downscale, "Average-pool factor applied before writing");
  toy->add_option("--seed", toy_seed, "Seed");

  // ---- extract ----
  auto* extract = app.add_subcommand("extract", "Run the DP feature queries and write features");
  std::string ex_config, ex_data, ex_out, ex_images = "train-images-idx3-ubyte",
                                          ex_labels = "train-labels-idx1-ubyte";
  CommonOverrides ex_over;
  extract->add_option("--config", ex_config, "Run config JSON")->required();
  extract->add_option("--data", ex_data, "Directory with IDX files");
  extract->add_option("--images", ex_images, "Image file name inside --data");
  extract->add_option("--labels", ex_labels, "Label file name inside --data");
  extract->add_option("--out", ex_out, "Output directory for features");
  ex_over.attach(extract);

  // ---- account ----
  auto* account = app.add_subcommand("account", "Render the privacy ledger for a config");
  std::string ac_config;
  bool ac_json = false;
  CommonOverrides ac_over;
  account->add_option("--config", ac_config, "Run config JSON")->required();
  account->add_flag("--json", ac_json, "Emit JSON instead of the text table");
  ac_over.attach(account);

  // ---- train ----
  auto* train = app.add_subcommand("train", "Run the curriculum and write a checkpoint + report");
  std::string tr_config, tr_data, tr_features, tr_checkpoint, tr_report,
      tr_images = "train-images-idx3-ubyte", tr_labels = "train-labels-idx1-ubyte";
  CommonOverrides tr_over;
  train->add_option("--config", tr_config, "Run config JSON")->required();
  train->add_option("--data", tr_data, "Directory with IDX files");
  train->add_option("--images", tr_images, "Image file name inside --data");
  train->add_option("--labels", tr_labels, "Label file name inside --data");
  train->add_option("--features", tr_features, "Directory written by `feta extract`");
  train->add_option("--checkpoint", tr_checkpoint, "Checkpoint output path");
  train->add_option("--report", tr_report, "Report output path");
  tr_over.attach(train);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Sample images from a checkpoint into IDX files");
  std::string sy_checkpoint, sy_out;
  std::size_t sy_count = 6000;  // mirrors the evaluation sampling default
  std::optional<std::uint64_t> sy_seed;
  synth->add_option("--checkpoint", sy_checkpoint, "Checkpoint path")->required();
  synth->add_option("--out", sy_out, "Output directory")->required();
  synth->add_option("--count", sy_count, "Number of images");
  synth->add_option("--seed", sy_seed, "Sampling seed (defaults to the checkpoint seed)");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Score a synthetic set against real test data");
  std::string ev_synth, ev_real, ev_out;
  std::string ev_synth_images = "synth-images-idx3-ubyte", ev_synth_labels = "synth-labels-idx1-ubyte";
  std::string ev_real_images = "test-images-idx3-ubyte", ev_real_labels = "test-labels-idx1-ubyte";
  std::size_t ev_k = 128;
  std::uint64_t ev_proj_seed = 7, ev_seed = 7;
  eval->add_option("--synth", ev_synth, "Directory with synthetic IDX files")->required();
  eval->add_option("--real", ev_real, "Directory with real test IDX files")->required();
  eval->add_option("--synth-images", ev_synth_images, "Synthetic image file name");
  eval->add_option("--synth-labels", ev_synth_labels, "Synthetic label file name");
  eval->add_option("--real-images", ev_real_images, "Real image file name");
  eval->add_option("--real-labels", ev_real_labels, "Real label file name");
  eval->add_option("--k", ev_k, "RFF dimension for the MMD metric");
  eval->add_option("--proj-seed", ev_proj_seed, "Projection seed for the MMD metric");
  eval->add_option("--seed", ev_seed, "Classifier training seed");
  eval->add_option("--out", ev_out, "Report output path");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "Privacy-allocation sweep over sigma_t x sigma_f");
  std::string sw_config, sw_data, sw_out,
      sw_images = "train-images-idx3-ubyte", sw_labels = "train-labels-idx1-ubyte",
      sw_test_images, sw_test_labels;
  std::vector<double> sw_sigma_t, sw_sigma_f;
  CommonOverrides sw_over;
  sweep->add_option("--config", sw_config, "Run config JSON")->required();
  sweep->add_option("--data", sw_data, "Directory with IDX files");
  sweep->add_option("--images", sw_images, "Image file name inside --data");
  sweep->add_option("--labels", sw_labels, "Label file name inside --data");
  sweep->add_option("--test-images", sw_test_images, "Held-out image file for Acc");
  sweep->add_option("--test-labels", sw_test_labels, "Held-out label file for Acc");
  sweep->add_option("--sigma-t-grid", sw_sigma_t, "sigma_t grid")->delimiter(',')->required();
  sweep->add_option("--sigma-f-grid", sw_sigma_f, "sigma_f grid")->delimiter(',')->required();
  sweep->add_option("--out", sw_out, "Output directory");
  sw_over.attach(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (toy->parsed()) {
    return guarded([&] {
      const LabeledDataset train_ds = downscale(
          make_toy_digits(toy_per_class, toy_classes, toy_size, toy_seed), toy_downscale);
      const LabeledDataset test_ds =
          downscale(make_toy_digits(toy_test_per_class, toy_classes, toy_size,
                                    toy_seed ^ 0x5eedULL),
                    toy_downscale);
      fs::create_directories(toy_out);
      save_idx(train_ds, fs::path(toy_out) / "train-images-idx3-ubyte",
               fs::path(toy_out) / "train-labels-idx1-ubyte");
      save_idx(test_ds, fs::path(toy_out) / "test-images-idx3-ubyte",
               fs::path(toy_out) / "test-labels-idx1-ubyte");
      std::cout << "wrote " << train_ds.size() << " train / " << test_ds.size()
                << " test images to " << toy_out << "\n";
      return 0;
    });
  }

  if (extract->parsed()) {
    return guarded([&] {
      RunConfig rc = load_run_config(ex_config);
      ex_over.apply(rc.curriculum);
      const auto& c = rc.curriculum;
      const LabeledDataset ds =
          load_data_dir(resolve(ex_data, rc.data_dir, "data directory"), ex_images, ex_labels);
      ds.validate_for_training();
      const FeatureConfig fc{c.seed, c.k, c.n_t, c.sigma_t, c.sigma_f, c.c_t, c.q_t};
      const ExtractResult result = extract_features(ds, fc);
      write_features(resolve(ex_out, rc.features_dir, "features output directory"), result);
      if (!result.specs.empty()) {
        std::cout << ledger_table_text(result.specs, c.target_delta);
      } else {
        std::cout << "feature queries ran without noise; no privacy guarantee\n";
      }
      return 0;
    });
  }

  if (account->parsed()) {
    return guarded([&] {
      RunConfig rc = load_run_config(ac_config);
      ac_over.apply(rc.curriculum);
      double sigma_d = 0.0;
      const auto specs = config_mechanisms(rc.curriculum, &sigma_d);
      std::cout << (ac_json ? ledger_table_json(specs, rc.curriculum.target_delta)
                            : ledger_table_text(specs, rc.curriculum.target_delta));
      if (!ac_json)
        std::cout << "sigma_d = " << sigma_d << ", t_d = " << rc.curriculum.finetune_steps()
                  << "\n";
      return 0;
    });
  }

  if (train->parsed()) {
    return guarded([&] {
      RunConfig rc = load_run_config(tr_config);
      tr_over.apply(rc.curriculum);
      const auto& c = rc.curriculum;
      const LabeledDataset ds =
          load_data_dir(resolve(tr_data, rc.data_dir, "data directory"), tr_images, tr_labels);

      CurriculumResult result = [&] {
        if (c.order == CurriculumOrder::kNone) return run_curriculum(c, ds);
        const std::string fdir = resolve(tr_features, rc.features_dir, "features directory");
        if (!fs::exists(fs::path(fdir) / "features.json"))
          throw PrerequisiteError("train needs features; run `feta extract` first (" +
                                  fdir + ")");
        return run_curriculum_with_features(c, ds, read_features(fdir));
      }();

      const fs::path ckpt(resolve(tr_checkpoint, rc.checkpoint_path, "checkpoint path"));
      const fs::path rep(resolve(tr_report, rc.report_path, "report path"));
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      save_checkpoint(result.model, CheckpointMeta{ds.meta, c.seed}, ckpt);
      write_text(rep, run_report_json(result.report));
      const fs::path stem = rep.parent_path() / rep.stem();
      write_text(fs::path(stem.string() + "-trace.jsonl"),
                 finetune_trace_json_lines(result.report));
      std::cout << timing_json(result.report);
      if (std::isfinite(result.report.realized_epsilon))
        std::cout << "realized epsilon = " << result.report.realized_epsilon
                  << " at alpha* = " << result.report.realized_alpha << "\n";
      else
        std::cout << "non-private run (epsilon = inf)\n";
      std::cout << "checkpoint: " << ckpt.string() << "\nreport: " << rep.string() << "\n";
      return 0;
    });
  }

  if (synth->parsed()) {
    return guarded([&] {
      CheckpointMeta meta;
      const DiffusionModel model = load_checkpoint(sy_checkpoint, &meta);
      const std::uint64_t seed = sy_seed.value_or(meta.seed);
      SeededRng rng = SeededRng(seed).derive("synth");
      LabeledDataset out;
      out.meta = meta.data;
      out.meta.classes = model.classes;
      for (std::size_t i = 0; i < sy_count; ++i) {
        const std::size_t label = i % model.classes;
        out.images.push_back(sample_images(model, 1, label, rng).front());
        out.labels.push_back(label);
      }
      fs::create_directories(sy_out);
      save_idx(out, fs::path(sy_out) / "synth-images-idx3-ubyte",
               fs::path(sy_out) / "synth-labels-idx1-ubyte");
      std::cout << "wrote " << out.size() << " images to " << sy_out << "\n";
      return 0;
    });
  }

  if (eval->parsed()) {
    return guarded([&] {
      if (!fs::exists(fs::path(ev_synth) / ev_synth_images))
        throw PrerequisiteError("eval needs a synthetic dataset; run `feta synth` first");
      const LabeledDataset synth_ds =
          load_idx(fs::path(ev_synth) / ev_synth_images, fs::path(ev_synth) / ev_synth_labels);
      const LabeledDataset real_ds =
          load_idx(fs::path(ev_real) / ev_real_images, fs::path(ev_real) / ev_real_labels);
      LabeledDataset synth_aligned = synth_ds;
      synth_aligned.meta.classes = real_ds.meta.classes;

      EvalReport rep;
      rep.mmd = rff_mmd(synth_aligned, real_ds,
                        sample_projection(ev_proj_seed, ev_k, real_ds.dim()));
      rep.accuracy = train_eval_classifier(synth_aligned, real_ds, ev_seed);
      rep.entropy = shannon_entropy(synth_ds);
      rep.texture = texture_complexity(synth_ds);
      const std::string text = eval_report_json(rep);
      if (!ev_out.empty()) write_text(ev_out, text);
      std::cout << text;
      return 0;
    });
  }

  if (sweep->parsed()) {
    return guarded([&] {
      RunConfig rc = load_run_config(sw_config);
      sw_over.apply(rc.curriculum);
      const LabeledDataset ds =
          load_data_dir(resolve(sw_data, rc.data_dir, "data directory"), sw_images, sw_labels);
      std::optional<LabeledDataset> test_ds;
      if (!sw_test_images.empty())
        test_ds = load_data_dir(resolve(sw_data, rc.data_dir, "data directory"),
                                sw_test_images, sw_test_labels);
      const SweepResult result = allocation_sweep(rc.curriculum, sw_sigma_t, sw_sigma_f, ds,
                                                  test_ds ? &*test_ds : nullptr);
      std::cout << sweep_summary_text(result) << "\n" << sweep_budget_table_text(result);
      if (!sw_out.empty()) {
        write_text(fs::path(sw_out) / "sweep.json", sweep_json(result));
        write_text(fs::path(sw_out) / "summary.txt",
                   sweep_summary_text(result) + "\n" + sweep_budget_table_text(result));
      }
      return 0;
    });
  }

  return 0;
}
