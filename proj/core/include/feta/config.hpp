#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace feta {

enum class CurriculumOrder {
  kSpatialThenFrequency,  // the recommended order
  kFrequencyThenSpatial,
  kMixed,        // alternate spatial and frequency minibatches 1:1
  kSpatialOnly,
  kFrequencyOnly,
  kNone,         // straight to DP-SGD, no warm-up
};

std::string order_name(CurriculumOrder order);
CurriculumOrder order_from_name(const std::string& name);

// Every knob of one end-to-end run. JSON round-trippable; unknown keys are
// rejected and the schema version is pinned.
struct CurriculumConfig {
  std::uint64_t seed = 7;
  CurriculumOrder order = CurriculumOrder::kSpatialThenFrequency;

  // privacy target; no target means a non-private run using sigma_d below
  std::optional<double> target_epsilon;
  double target_delta = 1e-4;

  // feature extraction
  double sigma_t = 4.0;
  double sigma_f = 10.0;
  double c_t = 4.0;
  double q_t = 0.15;
  std::size_t n_t = 10;
  std::size_t k = 128;

  // spatial warm-up (diffusion on central images)
  std::size_t spatial_epochs = 300;
  double spatial_lr = 1e-3;
  std::size_t spatial_batch = 32;

  // auxiliary generator
  std::size_t gen_epochs = 5;
  std::size_t gen_steps_per_epoch = 40;
  std::size_t gen_batch = 512;
  double gen_lr = 0.02;

  // frequency warm-up (diffusion on the generated dataset); the low rate
  // polishes texture without washing out the class conditioning learned from
  // the central images
  std::size_t n_f = 2000;
  std::size_t freq_epochs = 20;
  double freq_lr = 3e-4;
  std::size_t freq_batch = 64;

  // DP-SGD fine-tuning; t_d = round(finetune_epochs / q_d)
  std::size_t finetune_epochs = 15;
  double finetune_lr = 3e-4;
  double clip_norm = 1.0;
  double q_d = 0.05;
  double sigma_d = 0.0;  // only used when target_epsilon is absent
  bool finetune_adam = false;

  // model shapes
  std::size_t z_dim = 16;
  std::vector<std::size_t> gen_hidden = {64};
  std::size_t gen_class_embed_dim = 8;
  std::vector<std::size_t> denoiser_hidden = {128, 128};
  std::size_t time_embed_dim = 16;
  std::size_t class_embed_dim = 8;
  std::size_t diffusion_steps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  // dataset geometry (rows/cols 0 = infer from the data)
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 1;

  std::uint64_t finetune_steps() const;  // t_d
  void validate() const;
};

CurriculumConfig parse_curriculum_config(const std::string& json_text);
std::string curriculum_config_json(const CurriculumConfig& cfg);

// CLI-facing config: the curriculum plus file-system locations.
struct RunConfig {
  CurriculumConfig curriculum;
  std::string data_dir;
  std::string features_dir;
  std::string checkpoint_path;
  std::string report_path;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_json(const RunConfig& cfg);

}  // namespace feta
