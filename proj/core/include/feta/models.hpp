#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "feta/dataset.hpp"
#include "feta/features.hpp"
#include "feta/linalg.hpp"
#include "feta/mlp.hpp"
#include "feta/rng.hpp"

namespace feta {

struct NoiseSchedule {
  std::size_t steps = 0;       // T
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> beta;       // beta_1..beta_T, each in (0, 1)
  std::vector<double> alpha_bar;  // cumulative prod of (1 - beta), strictly decreasing

  static NoiseSchedule linear(std::size_t steps, double beta_min, double beta_max);
};

// Label-conditional denoiser: the MLP sees [noisy image, sinusoidal timestep
// embedding of t/T, learned class embedding] and predicts the injected noise.
struct DiffusionModel {
  Mlp denoiser;
  Matrix class_embed;  // classes x class_embed_dim, trained jointly
  NoiseSchedule schedule;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::size_t time_embed_dim = 0;

  std::size_t class_embed_dim() const { return class_embed.cols; }
};

// One-step generator: [z, class embedding] -> image in [0,1]^d through a
// sigmoid output head.
struct Generator {
  Mlp net;
  Matrix class_embed;  // classes x class_embed_dim
  std::size_t z_dim = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
};

DiffusionModel make_diffusion_model(std::size_t dim, std::size_t classes,
                                    const std::vector<std::size_t>& hidden,
                                    std::size_t time_embed_dim,
                                    std::size_t class_embed_dim,
                                    NoiseSchedule schedule, SeededRng& rng);

Generator make_generator(std::size_t z_dim, std::size_t dim, std::size_t classes,
                         const std::vector<std::size_t>& hidden,
                         std::size_t class_embed_dim, SeededRng& rng);

Vec time_embedding(std::size_t t, std::size_t total_steps, std::size_t dim);

// h_t = sqrt(abar_t) h0 + sqrt(1 - abar_t) e, 1 <= t <= T.
Vec forward_diffuse(const Vec& h0, std::size_t t, const Vec& e,
                    const NoiseSchedule& schedule);

Vec denoise_predict(const DiffusionModel& model, const Vec& h_t, std::size_t t,
                    std::size_t label);

// Flat parameter order (also the checkpoint order): the MLP layers (weight
// row-major then bias, per layer) followed by the class embedding row-major.
Vec model_params(const DiffusionModel& model);
void set_model_params(DiffusionModel& model, const Vec& flat);
std::size_t model_param_count(const DiffusionModel& model);
Vec generator_params(const Generator& gen);
void set_generator_params(Generator& gen, const Vec& flat);
std::size_t generator_param_count(const Generator& gen);

struct DiffusionLoss {
  double total_loss = 0.0;           // sum over the batch of |e - e_theta|^2
  Vec grad;                          // gradient of total_loss
  std::vector<double> sample_losses;
  std::vector<Vec> per_sample;       // per-example gradients (per_sample mode)
};

// For each sample draws t ~ U{1..T} and e ~ N(0, I), forms h_t and scores
// |e - e_theta(h_t, t, label)|^2. The batched gradient equals the sum of the
// per-sample gradients. Throws DivergenceError on a non-finite loss.
DiffusionLoss diffusion_loss_and_grads(const DiffusionModel& model,
                                       const std::vector<Vec>& h0,
                                       const std::vector<std::size_t>& labels,
                                       SeededRng& rng, bool per_sample);

// Ancestral DDPM reverse chain from pure noise; outputs clamped to [0,1].
std::vector<Vec> sample_images(const DiffusionModel& model, std::size_t n,
                               std::size_t label, SeededRng& rng);

struct RffMatchResult {
  double loss = 0.0;  // sum over batch classes of |mu_tilde_c - mu_hat_c|_2
  Vec grad;           // with respect to generator_params
  std::vector<std::size_t> missing_classes;  // target classes absent from the batch
};

// Eq-of-motion for the auxiliary generator: per-class distance between the
// batch mean embedding of G(z, c) and the privatized target, with analytic
// gradients through the cos/sin features and the generator.
RffMatchResult rff_match_loss_and_grad(const Generator& gen,
                                       const std::vector<Vec>& z_batch,
                                       const std::vector<std::size_t>& labels,
                                       const RffProjection& proj,
                                       const FrequencyFeatureSet& target);

struct GenTrainResult {
  Generator gen;
  std::vector<double> trace;  // loss per optimizer step
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double min_loss = 0.0;
};

// epochs x steps_per_epoch Adam steps; each step draws a fresh z batch with
// round-robin labels so every class is represented.
GenTrainResult train_generator(Generator gen, const FrequencyFeatureSet& target,
                               const RffProjection& proj, std::size_t epochs,
                               std::size_t steps_per_epoch, std::size_t batch,
                               double lr, SeededRng& rng);

// n_f labeled images in [0,1]^d with labels drawn from class_dist (empty
// means uniform).
LabeledDataset generate_frequency_dataset(const Generator& gen, std::size_t n_f,
                                          const std::vector<double>& class_dist,
                                          const DatasetMeta& meta, SeededRng& rng);

// Checkpoint container: magic "FETA", one version byte, a 4-byte little-endian
// JSON header length, the JSON header, then float32 little-endian parameters
// in the documented flat order.
struct CheckpointMeta {
  DatasetMeta data;
  std::uint64_t seed = 0;
};

void save_checkpoint(const DiffusionModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
DiffusionModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta);

}  // namespace feta
