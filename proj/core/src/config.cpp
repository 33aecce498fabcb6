#include "feta/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "feta/errors.hpp"

namespace feta {

using nlohmann::json;

std::string order_name(CurriculumOrder order) {
  switch (order) {
    case CurriculumOrder::kSpatialThenFrequency: return "spatial_then_frequency";
    case CurriculumOrder::kFrequencyThenSpatial: return "frequency_then_spatial";
    case CurriculumOrder::kMixed: return "mixed";
    case CurriculumOrder::kSpatialOnly: return "spatial_only";
    case CurriculumOrder::kFrequencyOnly: return "frequency_only";
    case CurriculumOrder::kNone: return "none";
  }
  throw std::invalid_argument("order_name: bad enum");
}

CurriculumOrder order_from_name(const std::string& name) {
  if (name == "spatial_then_frequency") return CurriculumOrder::kSpatialThenFrequency;
  if (name == "frequency_then_spatial") return CurriculumOrder::kFrequencyThenSpatial;
  if (name == "mixed") return CurriculumOrder::kMixed;
  if (name == "spatial_only") return CurriculumOrder::kSpatialOnly;
  if (name == "frequency_only") return CurriculumOrder::kFrequencyOnly;
  if (name == "none") return CurriculumOrder::kNone;
  throw ConfigError("unknown curriculum order: " + name);
}

std::uint64_t CurriculumConfig::finetune_steps() const {
  return static_cast<std::uint64_t>(
      std::llround(static_cast<double>(finetune_epochs) / q_d));
}

void CurriculumConfig::validate() const {
  if (target_epsilon && !(*target_epsilon > 0.0))
    throw ConfigError("target_epsilon must be > 0");
  if (!(target_delta > 0.0 && target_delta < 1.0))
    throw ConfigError("target_delta must be in (0, 1)");
  if (k < 2 || k % 2 != 0) throw ConfigError("k must be even and >= 2");
  if (!(sigma_t >= 0.0 && sigma_f >= 0.0 && sigma_d >= 0.0))
    throw ConfigError("noise scales must be >= 0");
  if (!(c_t > 0.0)) throw ConfigError("c_t must be > 0");
  if (!(q_t > 0.0 && q_t <= 1.0)) throw ConfigError("q_t must be in (0, 1]");
  if (!(q_d > 0.0 && q_d <= 1.0)) throw ConfigError("q_d must be in (0, 1]");
  if (n_t == 0) throw ConfigError("n_t must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(spatial_lr > 0.0 && freq_lr > 0.0 && gen_lr > 0.0 && finetune_lr > 0.0))
    throw ConfigError("learning rates must be > 0");
  if (spatial_batch == 0 || freq_batch == 0 || gen_batch == 0)
    throw ConfigError("batch sizes must be >= 1");
  if (gen_epochs == 0 || gen_steps_per_epoch == 0)
    throw ConfigError("generator schedule must be >= 1 step");
  if (n_f == 0) throw ConfigError("n_f must be >= 1");
  if (diffusion_steps == 0) throw ConfigError("diffusion_steps must be >= 1");
  if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max))
    throw ConfigError("need 0 < beta_min <= beta_max < 1");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0)
    throw ConfigError("time_embed_dim must be even and >= 2");
  if (class_embed_dim == 0 || gen_class_embed_dim == 0)
    throw ConfigError("class embedding dims must be >= 1");
  if (z_dim == 0) throw ConfigError("z_dim must be >= 1");
}

namespace {

const std::set<std::string>& curriculum_keys() {
  static const std::set<std::string> keys{
      "seed", "order", "target_epsilon", "target_delta",
      "sigma_t", "sigma_f", "c_t", "q_t", "n_t", "k",
      "spatial_epochs", "spatial_lr", "spatial_batch",
      "gen_epochs", "gen_steps_per_epoch", "gen_batch", "gen_lr",
      "n_f", "freq_epochs", "freq_lr", "freq_batch",
      "finetune_epochs", "finetune_lr", "clip_norm", "q_d", "sigma_d",
      "finetune_adam",
      "z_dim", "gen_hidden", "gen_class_embed_dim", "denoiser_hidden",
      "time_embed_dim", "class_embed_dim", "diffusion_steps",
      "beta_min", "beta_max", "rows", "cols", "channels"};
  return keys;
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config: bad value for key '") + key + "'");
    }
  }
}

CurriculumConfig curriculum_from_json(const json& j) {
  CurriculumConfig c;
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!curriculum_keys().count(key))
      throw ConfigError("config: unknown key '" + key + "'");
  }
  get_if(j, "seed", c.seed);
  if (j.contains("order")) c.order = order_from_name(j.at("order").get<std::string>());
  if (j.contains("target_epsilon") && !j.at("target_epsilon").is_null())
    c.target_epsilon = j.at("target_epsilon").get<double>();
  get_if(j, "target_delta", c.target_delta);
  get_if(j, "sigma_t", c.sigma_t);
  get_if(j, "sigma_f", c.sigma_f);
  get_if(j, "c_t", c.c_t);
  get_if(j, "q_t", c.q_t);
  get_if(j, "n_t", c.n_t);
  get_if(j, "k", c.k);
  get_if(j, "spatial_epochs", c.spatial_epochs);
  get_if(j, "spatial_lr", c.spatial_lr);
  get_if(j, "spatial_batch", c.spatial_batch);
  get_if(j, "gen_epochs", c.gen_epochs);
  get_if(j, "gen_steps_per_epoch", c.gen_steps_per_epoch);
  get_if(j, "gen_batch", c.gen_batch);
  get_if(j, "gen_lr", c.gen_lr);
  get_if(j, "n_f", c.n_f);
  get_if(j, "freq_epochs", c.freq_epochs);
  get_if(j, "freq_lr", c.freq_lr);
  get_if(j, "freq_batch", c.freq_batch);
  get_if(j, "finetune_epochs", c.finetune_epochs);
  get_if(j, "finetune_lr", c.finetune_lr);
  get_if(j, "clip_norm", c.clip_norm);
  get_if(j, "q_d", c.q_d);
  get_if(j, "sigma_d", c.sigma_d);
  get_if(j, "finetune_adam", c.finetune_adam);
  get_if(j, "z_dim", c.z_dim);
  get_if(j, "gen_hidden", c.gen_hidden);
  get_if(j, "gen_class_embed_dim", c.gen_class_embed_dim);
  get_if(j, "denoiser_hidden", c.denoiser_hidden);
  get_if(j, "time_embed_dim", c.time_embed_dim);
  get_if(j, "class_embed_dim", c.class_embed_dim);
  get_if(j, "diffusion_steps", c.diffusion_steps);
  get_if(j, "beta_min", c.beta_min);
  get_if(j, "beta_max", c.beta_max);
  get_if(j, "rows", c.rows);
  get_if(j, "cols", c.cols);
  get_if(j, "channels", c.channels);
  c.validate();
  return c;
}

json curriculum_to_json(const CurriculumConfig& c) {
  json j{{"seed", c.seed},
         {"order", order_name(c.order)},
         {"target_delta", c.target_delta},
         {"sigma_t", c.sigma_t},
         {"sigma_f", c.sigma_f},
         {"c_t", c.c_t},
         {"q_t", c.q_t},
         {"n_t", c.n_t},
         {"k", c.k},
         {"spatial_epochs", c.spatial_epochs},
         {"spatial_lr", c.spatial_lr},
         {"spatial_batch", c.spatial_batch},
         {"gen_epochs", c.gen_epochs},
         {"gen_steps_per_epoch", c.gen_steps_per_epoch},
         {"gen_batch", c.gen_batch},
         {"gen_lr", c.gen_lr},
         {"n_f", c.n_f},
         {"freq_epochs", c.freq_epochs},
         {"freq_lr", c.freq_lr},
         {"freq_batch", c.freq_batch},
         {"finetune_epochs", c.finetune_epochs},
         {"finetune_lr", c.finetune_lr},
         {"clip_norm", c.clip_norm},
         {"q_d", c.q_d},
         {"sigma_d", c.sigma_d},
         {"finetune_adam", c.finetune_adam},
         {"z_dim", c.z_dim},
         {"gen_hidden", c.gen_hidden},
         {"gen_class_embed_dim", c.gen_class_embed_dim},
         {"denoiser_hidden", c.denoiser_hidden},
         {"time_embed_dim", c.time_embed_dim},
         {"class_embed_dim", c.class_embed_dim},
         {"diffusion_steps", c.diffusion_steps},
         {"beta_min", c.beta_min},
         {"beta_max", c.beta_max},
         {"rows", c.rows},
         {"cols", c.cols},
         {"channels", c.channels}};
  if (c.target_epsilon)
    j["target_epsilon"] = *c.target_epsilon;
  else
    j["target_epsilon"] = nullptr;
  return j;
}

constexpr int kSchemaVersion = 1;

}  // namespace

CurriculumConfig parse_curriculum_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return curriculum_from_json(j);
}

std::string curriculum_config_json(const CurriculumConfig& cfg) {
  return curriculum_to_json(cfg).dump(2);
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
    throw ConfigError("config: missing or unsupported schema_version (expected 1)");

  static const std::set<std::string> top_keys{"schema_version", "curriculum", "paths"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!top_keys.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }

  RunConfig rc;
  if (j.contains("curriculum")) rc.curriculum = curriculum_from_json(j.at("curriculum"));
  if (j.contains("paths")) {
    static const std::set<std::string> path_keys{"data_dir", "features_dir",
                                                 "checkpoint", "report"};
    const auto& p = j.at("paths");
    for (const auto& [key, value] : p.items()) {
      (void)value;
      if (!path_keys.count(key)) throw ConfigError("config: unknown paths key '" + key + "'");
    }
    get_if(p, "data_dir", rc.data_dir);
    get_if(p, "features_dir", rc.features_dir);
    get_if(p, "checkpoint", rc.checkpoint_path);
    get_if(p, "report", rc.report_path);
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& cfg) {
  json j{{"schema_version", kSchemaVersion},
         {"curriculum", curriculum_to_json(cfg.curriculum)},
         {"paths",
          {{"data_dir", cfg.data_dir},
           {"features_dir", cfg.features_dir},
           {"checkpoint", cfg.checkpoint_path},
           {"report", cfg.report_path}}}};
  return j.dump(2);
}

}  // namespace feta
