#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "feta/accountant.hpp"
#include "feta/dataset.hpp"
#include "feta/linalg.hpp"
#include "feta/rng.hpp"

namespace feta {

// Random frequency vectors omega_j ~ N(0, I), reproducible from (seed, K, d).
struct RffProjection {
  Matrix omega;  // (K/2) x d
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::size_t d = 0;
};

// Per-class privatized mean embeddings. Each mu[c] has length K and was
// normalized by that class's public size; n_star records the total N*.
struct FrequencyFeatureSet {
  std::size_t k = 0;
  std::size_t d = 0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;  // projection seed (public, shared with training)
  double sigma_f = 0.0;
  std::size_t n_star = 0;
  std::vector<Vec> mu;  // classes x K
};

// Per-class noisy central images. Stored un-clamped; consumers clamp to [0,1]
// at training time.
struct CentralImageSet {
  std::size_t d = 0;
  std::size_t classes = 0;
  std::size_t n_t = 0;
  double sigma_t = 0.0;
  double c_t = 0.0;
  double q_t = 0.0;
  std::vector<std::vector<Vec>> images;  // classes x N_t x d
};

RffProjection sample_projection(std::uint64_t seed, std::size_t k, std::size_t d);

// phi(h): first K/2 coordinates sqrt(2/K) cos(omega_j . h), last K/2
// sqrt(2/K) sin(omega_j . h). Unit L2 norm by construction.
Vec rff_embed(const Vec& h, const RffProjection& proj);

// mu = (1/n_star) sum_i phi(h_i). Empty input gives the zero vector.
Vec mean_rff(const std::vector<Vec>& images, const RffProjection& proj,
             std::size_t n_star);

// mu + N(0, (sigma_f/n_star)^2 I); the query's sensitivity is 1/n_star.
Vec privatize_freq(const Vec& mu, double sigma_f, std::size_t n_star, SeededRng& rng);

// Poisson-sample at rate q_t, clip each image to L2 norm c_t, sum, divide by
// the expected batch B* = q_t * n_star_class, and add noise with
// per-coordinate std sigma_t * c_t / B*. An empty draw yields pure noise.
Vec central_image_query(const std::vector<Vec>& class_images, double q_t, double c_t,
                        double sigma_t, std::size_t n_star_class, SeededRng& rng);

struct FeatureConfig {
  std::uint64_t seed = 0;
  std::size_t k = 0;       // even, >= 2
  std::size_t n_t = 0;     // central images per class
  double sigma_t = 0.0;
  double sigma_f = 0.0;
  double c_t = 0.0;
  double q_t = 0.0;
};

struct ExtractResult {
  CentralImageSet central;
  FrequencyFeatureSet freq;
  // Ledger entries actually consumed: SGM(q_t, sigma_t) x N_t plus
  // SGM(1, sigma_f) x 1. Parallel composition across classes adds nothing.
  // Stages run with zero noise force the ledger to infinity instead.
  std::vector<SgmSpec> specs;
  RdpLedger ledger;
};

CentralImageSet extract_spatial(const LabeledDataset& ds, const FeatureConfig& cfg,
                                const SeededRng& root);
FrequencyFeatureSet extract_frequency(const LabeledDataset& ds, const FeatureConfig& cfg,
                                      const SeededRng& root);
ExtractResult extract_features(const LabeledDataset& ds, const FeatureConfig& cfg);

// features.json manifest plus raw little-endian float32 blobs freq.bin
// (C*K values, class-major) and central.bin (C*N_t*d, class-major then
// image-major). Readers reject version mismatches.
void write_features(const std::filesystem::path& dir, const ExtractResult& result);
struct LoadedFeatures {
  CentralImageSet central;
  FrequencyFeatureSet freq;
};
LoadedFeatures read_features(const std::filesystem::path& dir);

}  // namespace feta
