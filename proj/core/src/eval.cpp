#include "feta/eval.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "feta/errors.hpp"
#include "feta/mlp.hpp"
#include "feta/numeric.hpp"
#include "feta/rng.hpp"

namespace feta {

MmdReport rff_mmd(const LabeledDataset& synth, const LabeledDataset& real,
                  const RffProjection& proj) {
  if (synth.dim() != real.dim() || proj.d != real.dim())
    throw std::invalid_argument("rff_mmd: dimension mismatch");
  if (synth.meta.classes != real.meta.classes)
    throw DataError("rff_mmd: class sets differ");

  const auto real_counts = real.class_counts();
  const auto synth_counts = synth.class_counts();
  MmdReport rep;
  double total_w = 0.0;
  for (std::size_t c = 0; c < real.meta.classes; ++c) {
    if (real_counts[c] == 0 || synth_counts[c] == 0)
      throw DataError("rff_mmd: class " + std::to_string(c) + " absent from one set");
    std::vector<Vec> a, b;
    for (auto i : synth.class_indices(c)) a.push_back(synth.images[i]);
    for (auto i : real.class_indices(c)) b.push_back(real.images[i]);
    Vec diff = mean_rff(a, proj, a.size());
    axpy(-1.0, mean_rff(b, proj, b.size()), diff);
    const double v = norm2(diff);
    // combined counts keep the pooled value symmetric in (synth, real)
    const double w = static_cast<double>(real_counts[c] + synth_counts[c]);
    rep.per_class.push_back(v);
    rep.pooled += v * w;
    total_w += w;
  }
  rep.pooled /= total_w;
  return rep;
}

double train_eval_classifier(const LabeledDataset& synth,
                             const LabeledDataset& real_test, std::uint64_t seed) {
  if (synth.dim() != real_test.dim())
    throw std::invalid_argument("classifier: dimension mismatch");
  const std::size_t classes = std::max(synth.meta.classes, real_test.meta.classes);
  const auto counts = synth.class_counts();
  for (std::size_t c = 0; c < real_test.meta.classes; ++c)
    if (c >= counts.size() || counts[c] == 0)
      throw DataError("classifier: synth does not cover test class " + std::to_string(c));

  // fixed budget: [d, 32, C] tanh net, Adam 3e-3, 400 steps of batch 64
  constexpr std::size_t kSteps = 400;
  constexpr std::size_t kBatch = 64;
  SeededRng rng(seed, SeededRng::stream_label("classifier"));
  Mlp net = make_mlp({synth.dim(), 32, classes}, OutputActivation::kIdentity, rng);
  Vec params = flatten_params(net);
  AdamState opt = make_adam(params.size());

  for (std::size_t step = 0; step < kSteps; ++step) {
    Vec grad(params.size(), 0.0);
    for (std::size_t b = 0; b < kBatch; ++b) {
      const std::size_t i = rng.next_below(synth.size());
      const Vec logits = mlp_forward(net, synth.images[i]);
      const double m = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double v : logits) z += std::exp(v - m);
      Vec dlogit(classes);
      for (std::size_t c = 0; c < classes; ++c)
        dlogit[c] = std::exp(logits[c] - m) / z;
      dlogit[synth.labels[i]] -= 1.0;
      scale(dlogit, 1.0 / static_cast<double>(kBatch));
      const MlpGradients g = mlp_backward(net, synth.images[i], dlogit);
      axpy(1.0, flatten_grads(net, g), grad);
    }
    adam_step(params, grad, opt, 3e-3);
    set_params(net, params);
  }

  std::size_t hits = 0;
  for (std::size_t i = 0; i < real_test.size(); ++i) {
    const Vec logits = mlp_forward(net, real_test.images[i]);
    const std::size_t pred =
        std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (pred == real_test.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(real_test.size());
}

namespace {

// Channel-mean grayscale view of one image.
Vec grayscale(const Vec& img, const DatasetMeta& meta) {
  const std::size_t px = meta.rows * meta.cols;
  Vec g(px, 0.0);
  for (std::size_t ch = 0; ch < meta.channels; ++ch)
    for (std::size_t p = 0; p < px; ++p) g[p] += img[ch * px + p];
  scale(g, 1.0 / static_cast<double>(meta.channels));
  return g;
}

double histogram_entropy_bits(const Vec& values) {
  std::vector<std::size_t> hist(256, 0);
  for (double v : values) {
    const int bin = std::clamp(static_cast<int>(std::clamp(v, 0.0, 1.0) * 256.0), 0, 255);
    hist[bin] += 1;
  }
  const double n = static_cast<double>(values.size());
  double h = 0.0;
  for (auto c : hist)
    if (c > 0) {
      const double p = c / n;
      h -= p * std::log2(p);
    }
  return h;
}

}  // namespace

double shannon_entropy(const LabeledDataset& ds) {
  if (ds.images.empty()) throw std::invalid_argument("shannon_entropy: empty dataset");
  double sum = 0.0;
  for (const auto& img : ds.images)
    sum += histogram_entropy_bits(grayscale(img, ds.meta));
  return sum / static_cast<double>(ds.size());
}

double texture_complexity(const LabeledDataset& ds) {
  if (ds.images.empty()) throw std::invalid_argument("texture_complexity: empty dataset");
  const std::size_t rows = ds.meta.rows;
  const std::size_t cols = ds.meta.cols;
  double sum = 0.0;
  for (const auto& img : ds.images) {
    const Vec g = grayscale(img, ds.meta);
    Vec mag(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        // central differences with replicated borders
        const std::size_t cl = c > 0 ? c - 1 : 0;
        const std::size_t cr = c + 1 < cols ? c + 1 : cols - 1;
        const std::size_t ru = r > 0 ? r - 1 : 0;
        const std::size_t rd = r + 1 < rows ? r + 1 : rows - 1;
        const double gx = (g[r * cols + cr] - g[r * cols + cl]) / 2.0;
        const double gy = (g[rd * cols + c] - g[ru * cols + c]) / 2.0;
        mag[r * cols + c] = std::sqrt(gx * gx + gy * gy);
      }
    sum += histogram_entropy_bits(mag);
  }
  return sum / static_cast<double>(ds.size());
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j{{"rff_mmd", {{"per_class", report.mmd.per_class},
                                {"pooled", report.mmd.pooled}}},
                   {"accuracy", report.accuracy},
                   {"entropy_bits", report.entropy},
                   {"texture_complexity_bits", report.texture}};
  return j.dump(2) + "\n";
}

}  // namespace feta
