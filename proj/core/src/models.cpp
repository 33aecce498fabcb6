#include "feta/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "feta/errors.hpp"
#include "feta/numeric.hpp"

namespace feta {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_min, double beta_max) {
  if (steps == 0) throw std::invalid_argument("schedule: T must be positive");
  if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max))
    throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    s.beta[t] = steps == 1 ? beta_min
                           : beta_min + (beta_max - beta_min) * static_cast<double>(t) /
                                            static_cast<double>(steps - 1);
    prod *= 1.0 - s.beta[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

DiffusionModel make_diffusion_model(std::size_t dim, std::size_t classes,
                                    const std::vector<std::size_t>& hidden,
                                    std::size_t time_embed_dim,
                                    std::size_t class_embed_dim,
                                    NoiseSchedule schedule, SeededRng& rng) {
  if (dim == 0 || classes == 0) throw std::invalid_argument("diffusion model: bad dims");
  if (time_embed_dim % 2 != 0)
    throw std::invalid_argument("diffusion model: time_embed_dim must be even");
  DiffusionModel m;
  m.dim = dim;
  m.classes = classes;
  m.time_embed_dim = time_embed_dim;
  m.schedule = std::move(schedule);
  std::vector<std::size_t> dims{dim + time_embed_dim + class_embed_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(dim);
  m.denoiser = make_mlp(dims, OutputActivation::kIdentity, rng);
  m.class_embed = Matrix(classes, class_embed_dim);
  for (auto& v : m.class_embed.data) v = rng.next_gaussian();
  return m;
}

Generator make_generator(std::size_t z_dim, std::size_t dim, std::size_t classes,
                         const std::vector<std::size_t>& hidden,
                         std::size_t class_embed_dim, SeededRng& rng) {
  if (z_dim == 0 || dim == 0 || classes == 0)
    throw std::invalid_argument("generator: bad dims");
  Generator g;
  g.z_dim = z_dim;
  g.dim = dim;
  g.classes = classes;
  std::vector<std::size_t> dims{z_dim + class_embed_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(dim);
  g.net = make_mlp(dims, OutputActivation::kSigmoid, rng);
  g.class_embed = Matrix(classes, class_embed_dim);
  for (auto& v : g.class_embed.data) v = rng.next_gaussian();
  return g;
}

Vec time_embedding(std::size_t t, std::size_t total_steps, std::size_t dim) {
  const std::size_t half = dim / 2;
  Vec e(dim);
  const double x = static_cast<double>(t) / static_cast<double>(total_steps);
  for (std::size_t i = 0; i < half; ++i) {
    const double f =
        half > 1 ? std::exp(std::log(1000.0) * static_cast<double>(i) /
                            static_cast<double>(half - 1))
                 : 1.0;
    e[i] = std::sin(f * x);
    e[i + half] = std::cos(f * x);
  }
  return e;
}

Vec forward_diffuse(const Vec& h0, std::size_t t, const Vec& e,
                    const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps)
    throw std::invalid_argument("forward_diffuse: t out of range");
  if (h0.size() != e.size()) throw std::invalid_argument("forward_diffuse: dim mismatch");
  const double ab = schedule.alpha_bar[t - 1];
  const double sa = std::sqrt(ab);
  const double sb = std::sqrt(1.0 - ab);
  Vec h(h0.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = sa * h0[i] + sb * e[i];
  return h;
}

namespace {

Vec denoiser_input(const DiffusionModel& m, const Vec& h_t, std::size_t t,
                   std::size_t label) {
  if (h_t.size() != m.dim) throw std::invalid_argument("denoiser: image dim mismatch");
  if (label >= m.classes) throw std::invalid_argument("denoiser: label out of range");
  Vec in;
  in.reserve(m.dim + m.time_embed_dim + m.class_embed_dim());
  in.insert(in.end(), h_t.begin(), h_t.end());
  const Vec te = time_embedding(t, m.schedule.steps, m.time_embed_dim);
  in.insert(in.end(), te.begin(), te.end());
  const double* ce = &m.class_embed.data[label * m.class_embed.cols];
  in.insert(in.end(), ce, ce + m.class_embed.cols);
  return in;
}

}  // namespace

Vec denoise_predict(const DiffusionModel& model, const Vec& h_t, std::size_t t,
                    std::size_t label) {
  return mlp_forward(model.denoiser, denoiser_input(model, h_t, t, label));
}

Vec model_params(const DiffusionModel& model) {
  Vec flat = flatten_params(model.denoiser);
  flat.insert(flat.end(), model.class_embed.data.begin(), model.class_embed.data.end());
  return flat;
}

void set_model_params(DiffusionModel& model, const Vec& flat) {
  const std::size_t n = param_count(model.denoiser);
  if (flat.size() != n + model.class_embed.data.size())
    throw std::invalid_argument("set_model_params: size mismatch");
  set_params(model.denoiser, Vec(flat.begin(), flat.begin() + n));
  std::copy(flat.begin() + n, flat.end(), model.class_embed.data.begin());
}

std::size_t model_param_count(const DiffusionModel& model) {
  return param_count(model.denoiser) + model.class_embed.data.size();
}

Vec generator_params(const Generator& gen) {
  Vec flat = flatten_params(gen.net);
  flat.insert(flat.end(), gen.class_embed.data.begin(), gen.class_embed.data.end());
  return flat;
}

void set_generator_params(Generator& gen, const Vec& flat) {
  const std::size_t n = param_count(gen.net);
  if (flat.size() != n + gen.class_embed.data.size())
    throw std::invalid_argument("set_generator_params: size mismatch");
  set_params(gen.net, Vec(flat.begin(), flat.begin() + n));
  std::copy(flat.begin() + n, flat.end(), gen.class_embed.data.begin());
}

std::size_t generator_param_count(const Generator& gen) {
  return param_count(gen.net) + gen.class_embed.data.size();
}

DiffusionLoss diffusion_loss_and_grads(const DiffusionModel& model,
                                       const std::vector<Vec>& h0,
                                       const std::vector<std::size_t>& labels,
                                       SeededRng& rng, bool per_sample) {
  if (h0.empty()) throw std::invalid_argument("diffusion loss: empty batch");
  if (h0.size() != labels.size())
    throw std::invalid_argument("diffusion loss: image/label count mismatch");

  const std::size_t np = model_param_count(model);
  const std::size_t nw = param_count(model.denoiser);
  DiffusionLoss out;
  out.grad.assign(np, 0.0);

  for (std::size_t i = 0; i < h0.size(); ++i) {
    const std::size_t t = 1 + static_cast<std::size_t>(
                                  rng.next_double() * static_cast<double>(model.schedule.steps)) %
                                  model.schedule.steps;
    const Vec e = gaussian_vector(rng, model.dim, 1.0);
    const Vec ht = forward_diffuse(h0[i], t, e, model.schedule);
    const Vec in = denoiser_input(model, ht, t, labels[i]);
    const Vec pred = mlp_forward(model.denoiser, in);

    Vec resid(model.dim);
    double loss = 0.0;
    for (std::size_t j = 0; j < model.dim; ++j) {
      resid[j] = 2.0 * (pred[j] - e[j]);
      loss += (pred[j] - e[j]) * (pred[j] - e[j]);
    }
    if (!std::isfinite(loss)) throw DivergenceError("diffusion loss: non-finite loss");
    out.total_loss += loss;
    out.sample_losses.push_back(loss);

    const MlpGradients g = mlp_backward(model.denoiser, in, resid);
    Vec flat = flatten_grads(model.denoiser, g);
    flat.resize(np, 0.0);
    // class-embedding gradient sits in the tail of the input gradient
    const std::size_t ce_off = model.dim + model.time_embed_dim;
    for (std::size_t j = 0; j < model.class_embed.cols; ++j)
      flat[nw + labels[i] * model.class_embed.cols + j] = g.input[ce_off + j];
    axpy(1.0, flat, out.grad);
    if (per_sample) out.per_sample.push_back(std::move(flat));
  }
  return out;
}

std::vector<Vec> sample_images(const DiffusionModel& model, std::size_t n,
                               std::size_t label, SeededRng& rng) {
  std::vector<Vec> out;
  out.reserve(n);
  const auto& sch = model.schedule;
  for (std::size_t i = 0; i < n; ++i) {
    Vec h = gaussian_vector(rng, model.dim, 1.0);
    for (std::size_t t = sch.steps; t >= 1; --t) {
      const Vec eps = denoise_predict(model, h, t, label);
      const double beta = sch.beta[t - 1];
      const double scale = 1.0 / std::sqrt(1.0 - beta);
      const double coef = beta / std::sqrt(1.0 - sch.alpha_bar[t - 1]);
      for (std::size_t j = 0; j < model.dim; ++j) h[j] = scale * (h[j] - coef * eps[j]);
      if (t > 1) axpy(1.0, gaussian_vector(rng, model.dim, std::sqrt(beta)), h);
    }
    for (auto& v : h) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(h));
  }
  return out;
}

RffMatchResult rff_match_loss_and_grad(const Generator& gen,
                                       const std::vector<Vec>& z_batch,
                                       const std::vector<std::size_t>& labels,
                                       const RffProjection& proj,
                                       const FrequencyFeatureSet& target) {
  if (z_batch.empty()) throw std::invalid_argument("rff match: empty batch");
  if (z_batch.size() != labels.size())
    throw std::invalid_argument("rff match: z/label count mismatch");
  if (target.classes != gen.classes)
    throw std::invalid_argument("rff match: class count mismatch");
  if (proj.k != target.k || proj.d != gen.dim)
    throw std::invalid_argument("rff match: projection shape mismatch");

  const std::size_t n = z_batch.size();
  const std::size_t half = proj.k / 2;
  const std::size_t ce_cols = gen.class_embed.cols;

  // forward: images and embeddings
  std::vector<Vec> inputs(n);
  std::vector<Vec> imgs(n);
  std::vector<Vec> phis(n);
  std::vector<std::vector<std::size_t>> by_class(gen.classes);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= gen.classes) throw std::invalid_argument("rff match: label out of range");
    Vec in = z_batch[i];
    const double* ce = &gen.class_embed.data[labels[i] * ce_cols];
    in.insert(in.end(), ce, ce + ce_cols);
    imgs[i] = mlp_forward(gen.net, in);
    phis[i] = rff_embed(imgs[i], proj);
    by_class[labels[i]].push_back(i);
    inputs[i] = std::move(in);
  }

  RffMatchResult res;
  const std::size_t np = generator_param_count(gen);
  const std::size_t nw = param_count(gen.net);
  res.grad.assign(np, 0.0);

  std::vector<Vec> dphi(n, Vec(proj.k, 0.0));
  for (std::size_t c = 0; c < gen.classes; ++c) {
    if (by_class[c].empty()) {
      res.missing_classes.push_back(c);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(by_class[c].size());
    Vec mu_hat(proj.k, 0.0);
    for (auto i : by_class[c]) axpy(inv, phis[i], mu_hat);
    Vec diff = mu_hat;
    axpy(-1.0, target.mu[c], diff);
    const double nrm = norm2(diff);
    res.loss += nrm;
    if (nrm <= 1e-12) continue;  // flat at the optimum
    for (auto i : by_class[c])
      for (std::size_t j = 0; j < proj.k; ++j) dphi[i][j] = diff[j] / nrm * inv;
  }

  // backprop dphi -> image -> generator parameters
  const double s = std::sqrt(2.0 / static_cast<double>(proj.k));
  for (std::size_t i = 0; i < n; ++i) {
    Vec dimg(gen.dim, 0.0);
    for (std::size_t j = 0; j < half; ++j) {
      const double* w = &proj.omega.data[j * proj.d];
      double p = 0.0;
      for (std::size_t q = 0; q < proj.d; ++q) p += w[q] * imgs[i][q];
      // d cos = -s sin(p) w; d sin = s cos(p) w
      const double coef = s * (-dphi[i][j] * std::sin(p) + dphi[i][j + half] * std::cos(p));
      if (coef != 0.0)
        for (std::size_t q = 0; q < proj.d; ++q) dimg[q] += coef * w[q];
    }
    const MlpGradients g = mlp_backward(gen.net, inputs[i], dimg);
    Vec flat = flatten_grads(gen.net, g);
    flat.resize(np, 0.0);
    for (std::size_t j = 0; j < ce_cols; ++j)
      flat[nw + labels[i] * ce_cols + j] = g.input[gen.z_dim + j];
    axpy(1.0, flat, res.grad);
  }
  if (!std::isfinite(res.loss)) throw DivergenceError("rff match: non-finite loss");
  return res;
}

GenTrainResult train_generator(Generator gen, const FrequencyFeatureSet& target,
                               const RffProjection& proj, std::size_t epochs,
                               std::size_t steps_per_epoch, std::size_t batch,
                               double lr, SeededRng& rng) {
  if (epochs == 0) throw std::invalid_argument("train_generator: epochs must be >= 1");
  if (batch < gen.classes)
    throw std::invalid_argument("train_generator: batch smaller than class count");

  GenTrainResult out;
  Vec params = generator_params(gen);
  AdamState opt = make_adam(params.size());
  std::vector<std::size_t> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = i % gen.classes;

  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<Vec> z;
      z.reserve(batch);
      for (std::size_t i = 0; i < batch; ++i)
        z.push_back(gaussian_vector(rng, gen.z_dim, 1.0));
      const RffMatchResult r = rff_match_loss_and_grad(gen, z, labels, proj, target);
      out.trace.push_back(r.loss);
      adam_step(params, r.grad, opt, lr);
      set_generator_params(gen, params);
    }
  }
  out.initial_loss = out.trace.front();
  out.final_loss = out.trace.back();
  out.min_loss = *std::min_element(out.trace.begin(), out.trace.end());
  out.gen = std::move(gen);
  return out;
}

LabeledDataset generate_frequency_dataset(const Generator& gen, std::size_t n_f,
                                          const std::vector<double>& class_dist,
                                          const DatasetMeta& meta, SeededRng& rng) {
  if (n_f == 0) throw std::invalid_argument("generate: n_f must be >= 1");
  std::vector<double> dist = class_dist;
  if (dist.empty()) dist.assign(gen.classes, 1.0 / static_cast<double>(gen.classes));
  if (dist.size() != gen.classes)
    throw std::invalid_argument("generate: class distribution size mismatch");
  double tot = 0.0;
  for (double p : dist) {
    if (p < 0.0) throw std::invalid_argument("generate: negative class probability");
    tot += p;
  }
  if (!(tot > 0.0)) throw std::invalid_argument("generate: zero-mass class distribution");

  LabeledDataset ds;
  ds.meta = meta;
  ds.meta.classes = gen.classes;
  for (std::size_t i = 0; i < n_f; ++i) {
    const double u = rng.next_double() * tot;
    double acc = 0.0;
    std::size_t label = gen.classes - 1;
    for (std::size_t c = 0; c < gen.classes; ++c) {
      acc += dist[c];
      if (u < acc) {
        label = c;
        break;
      }
    }
    Vec in = gaussian_vector(rng, gen.z_dim, 1.0);
    const double* ce = &gen.class_embed.data[label * gen.class_embed.cols];
    in.insert(in.end(), ce, ce + gen.class_embed.cols);
    ds.images.push_back(mlp_forward(gen.net, in));
    ds.labels.push_back(label);
  }
  return ds;
}

namespace {

constexpr char kMagic[4] = {'F', 'E', 'T', 'A'};
constexpr unsigned char kCheckpointVersion = 1;

void write_le32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_le32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint: truncated");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const DiffusionModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out.write(kMagic, 4);
  out.put(static_cast<char>(kCheckpointVersion));

  nlohmann::json j{{"kind", "diffusion"},
                   {"dim", model.dim},
                   {"classes", model.classes},
                   {"denoiser_dims", model.denoiser.dims},
                   {"time_embed_dim", model.time_embed_dim},
                   {"class_embed_dim", model.class_embed_dim()},
                   {"schedule",
                    {{"T", model.schedule.steps},
                     {"beta_min", model.schedule.beta_min},
                     {"beta_max", model.schedule.beta_max}}},
                   {"rows", meta.data.rows},
                   {"cols", meta.data.cols},
                   {"channels", meta.data.channels},
                   {"seed", meta.seed}};
  const std::string header = j.dump();
  write_le32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  for (double v : model_params(model)) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_le32(out, bits);
  }
  if (!out) throw DataError("checkpoint: write failure");
}

DiffusionModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("checkpoint: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic");
  const int version = in.get();
  if (version != kCheckpointVersion) throw DataError("checkpoint: version mismatch");
  const std::uint32_t hlen = read_le32(in);
  std::string header(hlen, '\0');
  if (!in.read(header.data(), hlen)) throw DataError("checkpoint: truncated header");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (j.at("kind").get<std::string>() != "diffusion")
    throw DataError("checkpoint: unexpected kind");

  const auto dims = j.at("denoiser_dims").get<std::vector<std::size_t>>();
  const std::size_t dim = j.at("dim").get<std::size_t>();
  const std::size_t classes = j.at("classes").get<std::size_t>();
  const std::size_t te = j.at("time_embed_dim").get<std::size_t>();
  const std::size_t ce = j.at("class_embed_dim").get<std::size_t>();
  const auto& js = j.at("schedule");
  const NoiseSchedule sch = NoiseSchedule::linear(js.at("T").get<std::size_t>(),
                                                  js.at("beta_min").get<double>(),
                                                  js.at("beta_max").get<double>());
  std::vector<std::size_t> hidden(dims.begin() + 1, dims.end() - 1);
  SeededRng scratch(0);
  DiffusionModel model = make_diffusion_model(dim, classes, hidden, te, ce, sch, scratch);

  Vec flat(model_param_count(model));
  for (auto& v : flat) {
    const std::uint32_t bits = read_le32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  char extra;
  if (in.read(&extra, 1)) throw DataError("checkpoint: trailing bytes");
  set_model_params(model, flat);

  if (meta) {
    meta->data.rows = j.at("rows").get<std::size_t>();
    meta->data.cols = j.at("cols").get<std::size_t>();
    meta->data.channels = j.at("channels").get<std::size_t>();
    meta->data.classes = classes;
    meta->seed = j.at("seed").get<std::uint64_t>();
  }
  return model;
}

}  // namespace feta
