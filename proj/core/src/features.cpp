#include "feta/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "feta/errors.hpp"
#include "feta/numeric.hpp"

namespace feta {

RffProjection sample_projection(std::uint64_t seed, std::size_t k, std::size_t d) {
  if (k < 2 || k % 2 != 0)
    throw std::invalid_argument("sample_projection: K must be even and >= 2");
  if (d == 0) throw std::invalid_argument("sample_projection: d must be positive");
  RffProjection proj;
  proj.seed = seed;
  proj.k = k;
  proj.d = d;
  proj.omega = Matrix(k / 2, d);
  SeededRng rng(seed, SeededRng::stream_label("rff"));
  for (auto& v : proj.omega.data) v = rng.next_gaussian();
  return proj;
}

Vec rff_embed(const Vec& h, const RffProjection& proj) {
  if (h.size() != proj.d) throw std::invalid_argument("rff_embed: dimension mismatch");
  const std::size_t half = proj.k / 2;
  Vec phi(proj.k);
  const double s = std::sqrt(2.0 / static_cast<double>(proj.k));
  for (std::size_t j = 0; j < half; ++j) {
    const double* w = &proj.omega.data[j * proj.d];
    double p = 0.0;
    for (std::size_t i = 0; i < proj.d; ++i) p += w[i] * h[i];
    phi[j] = s * std::cos(p);
    phi[j + half] = s * std::sin(p);
  }
  return phi;
}

Vec mean_rff(const std::vector<Vec>& images, const RffProjection& proj,
             std::size_t n_star) {
  if (n_star == 0) throw std::invalid_argument("mean_rff: n_star must be positive");
  if (n_star < images.size())
    throw std::invalid_argument("mean_rff: n_star must be >= number of images");
  Vec mu(proj.k, 0.0);
  for (const auto& h : images) axpy(1.0, rff_embed(h, proj), mu);
  scale(mu, 1.0 / static_cast<double>(n_star));
  return mu;
}

Vec privatize_freq(const Vec& mu, double sigma_f, std::size_t n_star, SeededRng& rng) {
  if (!(sigma_f >= 0.0) || !std::isfinite(sigma_f))
    throw std::invalid_argument("privatize_freq: sigma_f must be finite and >= 0");
  if (n_star == 0) throw std::invalid_argument("privatize_freq: n_star must be positive");
  Vec out = mu;
  if (sigma_f == 0.0) return out;
  const Vec noise = gaussian_vector(rng, mu.size(), sigma_f / static_cast<double>(n_star));
  axpy(1.0, noise, out);
  return out;
}

Vec central_image_query(const std::vector<Vec>& class_images, double q_t, double c_t,
                        double sigma_t, std::size_t n_star_class, SeededRng& rng) {
  if (!(q_t > 0.0 && q_t <= 1.0))
    throw std::invalid_argument("central_image_query: q_t must be in (0, 1]");
  if (!(c_t > 0.0)) throw std::invalid_argument("central_image_query: c_t must be > 0");
  if (!(sigma_t >= 0.0)) throw std::invalid_argument("central_image_query: sigma_t must be >= 0");
  if (class_images.empty()) throw DataError("central_image_query: empty class");
  const double b_star = q_t * static_cast<double>(n_star_class);
  if (!(b_star > 0.0)) throw std::invalid_argument("central_image_query: B* must be > 0");

  const std::size_t d = class_images.front().size();
  const auto idx = poisson_subsample(rng, class_images.size(), q_t);
  Vec sum(d, 0.0);
  for (auto i : idx) {
    const Vec& h = class_images[i];
    const double n = norm2(h);
    axpy(n > c_t ? c_t / n : 1.0, h, sum);
  }
  scale(sum, 1.0 / b_star);
  if (sigma_t > 0.0)
    axpy(1.0, gaussian_vector(rng, d, sigma_t * c_t / b_star), sum);
  return sum;
}

CentralImageSet extract_spatial(const LabeledDataset& ds, const FeatureConfig& cfg,
                                const SeededRng& root) {
  ds.validate_for_training();
  CentralImageSet out;
  out.d = ds.dim();
  out.classes = ds.meta.classes;
  out.n_t = cfg.n_t;
  out.sigma_t = cfg.sigma_t;
  out.c_t = cfg.c_t;
  out.q_t = cfg.q_t;
  const SeededRng spatial_root = root.derive("spatial");
  for (std::size_t c = 0; c < ds.meta.classes; ++c) {
    SeededRng rng = spatial_root.derive(c);
    std::vector<Vec> class_images;
    for (auto i : ds.class_indices(c)) class_images.push_back(ds.images[i]);
    std::vector<Vec> queries;
    // Poisson batches are re-drawn independently for each of the N_t
    // repetitions; that is what the N_t-fold composition accounts for.
    for (std::size_t t = 0; t < cfg.n_t; ++t)
      queries.push_back(central_image_query(class_images, cfg.q_t, cfg.c_t,
                                            cfg.sigma_t, class_images.size(), rng));
    out.images.push_back(std::move(queries));
  }
  return out;
}

FrequencyFeatureSet extract_frequency(const LabeledDataset& ds, const FeatureConfig& cfg,
                                      const SeededRng& root) {
  ds.validate_for_training();
  FrequencyFeatureSet out;
  out.k = cfg.k;
  out.d = ds.dim();
  out.classes = ds.meta.classes;
  out.seed = cfg.seed;
  out.sigma_f = cfg.sigma_f;
  out.n_star = ds.n_star();
  const RffProjection proj = sample_projection(cfg.seed, cfg.k, ds.dim());
  const SeededRng freq_root = root.derive("freq");
  for (std::size_t c = 0; c < ds.meta.classes; ++c) {
    SeededRng rng = freq_root.derive(c);
    std::vector<Vec> class_images;
    for (auto i : ds.class_indices(c)) class_images.push_back(ds.images[i]);
    const Vec mu = mean_rff(class_images, proj, class_images.size());
    out.mu.push_back(privatize_freq(mu, cfg.sigma_f, class_images.size(), rng));
  }
  return out;
}

ExtractResult extract_features(const LabeledDataset& ds, const FeatureConfig& cfg) {
  const SeededRng root(cfg.seed);
  ExtractResult r;
  r.central = extract_spatial(ds, cfg, root);
  r.freq = extract_frequency(ds, cfg, root);
  r.ledger = RdpLedger::zero();
  if (cfg.sigma_t > 0.0 && cfg.sigma_f > 0.0) {
    r.specs.push_back(SgmSpec{cfg.q_t, cfg.sigma_t, cfg.n_t, "spatial"});
    r.specs.push_back(SgmSpec{1.0, cfg.sigma_f, 1, "frequency"});
    for (const auto& s : r.specs) r.ledger = compose(r.ledger, s);
  } else {
    // Zero noise means no privacy guarantee to account for.
    r.ledger = RdpLedger::infinite();
  }
  return r;
}

namespace {

void write_f32_blob(const std::filesystem::path& path, const std::vector<float>& vals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("features: cannot write " + path.string());
  for (float v : vals) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(bits),
                                static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16),
                                static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw DataError("features: write failure on " + path.string());
}

std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("features: cannot open " + path.string());
  std::vector<float> vals(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw DataError("features: truncated blob " + path.string());
    const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                               (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    std::memcpy(&vals[i], &bits, 4);
  }
  char extra;
  if (in.read(&extra, 1)) throw DataError("features: blob larger than manifest count");
  return vals;
}

constexpr int kFeatureVersion = 1;

}  // namespace

void write_features(const std::filesystem::path& dir, const ExtractResult& result) {
  std::filesystem::create_directories(dir);
  const auto& f = result.freq;
  const auto& c = result.central;

  std::vector<float> freq;
  freq.reserve(f.classes * f.k);
  for (const auto& mu : f.mu)
    for (double v : mu) freq.push_back(static_cast<float>(v));
  std::vector<float> central;
  central.reserve(c.classes * c.n_t * c.d);
  for (const auto& cls : c.images)
    for (const auto& img : cls)
      for (double v : img) central.push_back(static_cast<float>(v));

  write_f32_blob(dir / "freq.bin", freq);
  write_f32_blob(dir / "central.bin", central);

  nlohmann::json j{{"version", kFeatureVersion},
                   {"k", f.k},
                   {"d", f.d},
                   {"classes", f.classes},
                   {"seed", f.seed},
                   {"sigma_t", c.sigma_t},
                   {"sigma_f", f.sigma_f},
                   {"c_t", c.c_t},
                   {"q_t", c.q_t},
                   {"n_t", c.n_t},
                   {"n_star", f.n_star},
                   {"freq_blob", "freq.bin"},
                   {"central_blob", "central.bin"},
                   {"freq_count", freq.size()},
                   {"central_count", central.size()}};
  std::ofstream out(dir / "features.json");
  if (!out) throw DataError("features: cannot write manifest");
  out << j.dump(2) << "\n";
}

LoadedFeatures read_features(const std::filesystem::path& dir) {
  std::ifstream in(dir / "features.json");
  if (!in) throw PrerequisiteError("features: missing manifest in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("features: bad manifest: ") + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != kFeatureVersion)
    throw DataError("features: manifest version mismatch");

  LoadedFeatures lf;
  auto& f = lf.freq;
  auto& c = lf.central;
  f.k = j.at("k").get<std::size_t>();
  f.d = j.at("d").get<std::size_t>();
  f.classes = j.at("classes").get<std::size_t>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.sigma_f = j.at("sigma_f").get<double>();
  f.n_star = j.at("n_star").get<std::size_t>();
  c.d = f.d;
  c.classes = f.classes;
  c.n_t = j.at("n_t").get<std::size_t>();
  c.sigma_t = j.at("sigma_t").get<double>();
  c.c_t = j.at("c_t").get<double>();
  c.q_t = j.at("q_t").get<double>();

  const std::size_t freq_count = j.at("freq_count").get<std::size_t>();
  const std::size_t central_count = j.at("central_count").get<std::size_t>();
  if (freq_count != f.classes * f.k || central_count != c.classes * c.n_t * c.d)
    throw DataError("features: manifest counts inconsistent with shape fields");

  const auto freq = read_f32_blob(dir / j.at("freq_blob").get<std::string>(), freq_count);
  const auto central =
      read_f32_blob(dir / j.at("central_blob").get<std::string>(), central_count);

  std::size_t off = 0;
  for (std::size_t cls = 0; cls < f.classes; ++cls) {
    Vec mu(f.k);
    for (std::size_t i = 0; i < f.k; ++i) mu[i] = freq[off++];
    f.mu.push_back(std::move(mu));
  }
  off = 0;
  for (std::size_t cls = 0; cls < c.classes; ++cls) {
    std::vector<Vec> imgs;
    for (std::size_t t = 0; t < c.n_t; ++t) {
      Vec img(c.d);
      for (std::size_t i = 0; i < c.d; ++i) img[i] = central[off++];
      imgs.push_back(std::move(img));
    }
    c.images.push_back(std::move(imgs));
  }
  return lf;
}

}  // namespace feta
