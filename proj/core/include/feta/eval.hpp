#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feta/dataset.hpp"
#include "feta/features.hpp"

namespace feta {

struct MmdReport {
  std::vector<double> per_class;  // |mean phi(synth_c) - mean phi(real_c)|_2
  double pooled = 0.0;            // class-weighted mean (weights from real counts)
};

// Fidelity proxy built from the unit-norm embeddings; every value is in
// [0, 2] by the triangle inequality.
MmdReport rff_mmd(const LabeledDataset& synth, const LabeledDataset& real,
                  const RffProjection& proj);

// Trains a fixed small dense classifier on synth for a fixed step budget and
// reports top-1 accuracy on real_test. Deterministic given the seed. Throws
// DataError when synth does not cover every test class.
double train_eval_classifier(const LabeledDataset& synth,
                             const LabeledDataset& real_test, std::uint64_t seed);

// Mean per-image Shannon entropy (bits) of a 256-bin histogram over the
// channel-mean grayscale image.
double shannon_entropy(const LabeledDataset& ds);

// House metric: 256-bin Shannon entropy of the central-difference
// gradient-magnitude map, averaged over images.
double texture_complexity(const LabeledDataset& ds);

struct EvalReport {
  MmdReport mmd;
  double accuracy = 0.0;
  double entropy = 0.0;
  double texture = 0.0;
};

std::string eval_report_json(const EvalReport& report);

}  // namespace feta
