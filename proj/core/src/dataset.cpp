#include "feta/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "feta/errors.hpp"
#include "feta/rng.hpp"

namespace feta {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;  // 2051
constexpr std::uint32_t kLabelMagic = 0x00000801;  // 2049

std::uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw DataError(std::string("idx: truncated ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_indices(std::size_t c) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(meta.classes, 0);
  for (auto l : labels) {
    if (l >= meta.classes) throw DataError("dataset: label out of range");
    counts[l] += 1;
  }
  return counts;
}

void LabeledDataset::validate_for_training() const {
  if (images.empty()) throw DataError("dataset: empty");
  if (images.size() != labels.size()) throw DataError("dataset: image/label count mismatch");
  for (auto n : class_counts())
    if (n == 0) throw DataError("dataset: a class has zero images (coverage error)");
}

LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path) {
  std::ifstream img(image_path, std::ios::binary);
  if (!img) throw DataError("idx: cannot open " + image_path.string());
  std::ifstream lab(label_path, std::ios::binary);
  if (!lab) throw DataError("idx: cannot open " + label_path.string());

  if (read_be32(img, "image magic") != kImageMagic)
    throw DataError("idx: bad image magic in " + image_path.string());
  const std::size_t n = read_be32(img, "image count");
  const std::size_t rows = read_be32(img, "rows");
  const std::size_t cols = read_be32(img, "cols");

  if (read_be32(lab, "label magic") != kLabelMagic)
    throw DataError("idx: bad label magic in " + label_path.string());
  const std::size_t nl = read_be32(lab, "label count");
  if (n != nl) throw DataError("idx: image/label count mismatch");

  LabeledDataset ds;
  ds.meta.rows = rows;
  ds.meta.cols = cols;
  ds.meta.channels = 1;
  const std::size_t d = rows * cols;
  std::vector<unsigned char> buf(d);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d)))
      throw DataError("idx: truncated image payload");
    Vec v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = buf[j] / 255.0;
    ds.images.push_back(std::move(v));
    char c;
    if (!lab.read(&c, 1)) throw DataError("idx: truncated label payload");
    const std::size_t l = static_cast<unsigned char>(c);
    max_label = std::max(max_label, l);
    ds.labels.push_back(l);
  }
  ds.meta.classes = n > 0 ? max_label + 1 : 0;
  return ds;
}

void save_idx(const LabeledDataset& ds, const std::filesystem::path& image_path,
              const std::filesystem::path& label_path) {
  if (ds.meta.channels != 1)
    throw DataError("idx: only single-channel datasets can be saved");
  std::ofstream img(image_path, std::ios::binary);
  if (!img) throw DataError("idx: cannot write " + image_path.string());
  std::ofstream lab(label_path, std::ios::binary);
  if (!lab) throw DataError("idx: cannot write " + label_path.string());

  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(ds.meta.rows));
  write_be32(img, static_cast<std::uint32_t>(ds.meta.cols));
  const std::size_t d = ds.dim();
  std::vector<unsigned char> buf(d);
  for (const auto& v : ds.images) {
    for (std::size_t j = 0; j < d; ++j) {
      // round half up, clamped to 0..255
      const double q = std::floor(255.0 * std::clamp(v[j], 0.0, 1.0) + 0.5);
      buf[j] = static_cast<unsigned char>(q);
    }
    img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(d));
  }

  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (auto l : ds.labels) {
    const char c = static_cast<char>(static_cast<unsigned char>(l));
    lab.write(&c, 1);
  }
  if (!img || !lab) throw DataError("idx: write failure");
}

LabeledDataset downscale(const LabeledDataset& ds, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("downscale: factor must be positive");
  if (factor == 1) return ds;
  if (ds.meta.rows % factor != 0 || ds.meta.cols % factor != 0)
    throw DataError("downscale: image dims not divisible by factor");
  LabeledDataset out;
  out.labels = ds.labels;
  out.meta = ds.meta;
  out.meta.rows = ds.meta.rows / factor;
  out.meta.cols = ds.meta.cols / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (const auto& v : ds.images) {
    Vec o(out.meta.rows * out.meta.cols * out.meta.channels, 0.0);
    for (std::size_t ch = 0; ch < ds.meta.channels; ++ch)
      for (std::size_t r = 0; r < ds.meta.rows; ++r)
        for (std::size_t c = 0; c < ds.meta.cols; ++c) {
          const std::size_t src = (ch * ds.meta.rows + r) * ds.meta.cols + c;
          const std::size_t dst =
              (ch * out.meta.rows + r / factor) * out.meta.cols + c / factor;
          o[dst] += v[src] * inv;
        }
    out.images.push_back(std::move(o));
  }
  return out;
}

namespace {

// One jittered glyph on a size x size canvas. Shapes are deliberately crude;
// classes 0 and 1 (ellipse ring and vertical stroke) are near-separable.
Vec draw_glyph(std::size_t digit, std::size_t size, SeededRng& rng) {
  const double s = static_cast<double>(size);
  const double cx = s / 2.0 + (rng.next_double() - 0.5) * 2.4;
  const double cy = s / 2.0 + (rng.next_double() - 0.5) * 2.4;
  const double ink = 0.85 + 0.15 * rng.next_double();
  const double th = 1.2 + 0.7 * rng.next_double();
  const double rx = s * 0.30 * (0.9 + 0.2 * rng.next_double());
  const double ry = s * 0.38 * (0.9 + 0.2 * rng.next_double());
  const double x1 = cx + (rng.next_double() - 0.5) * 2.0;
  const double tw = 2.0 * th * th * 0.4225;

  Vec img(size * size, 0.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      double v = 0.0;
      switch (digit % 10) {
        case 0: {  // ellipse ring
          const double r = std::sqrt((dx / rx) * (dx / rx) + (dy / ry) * (dy / ry));
          const double w = th / s * 3.2;
          v = ink * std::exp(-(r - 1.0) * (r - 1.0) / (2.0 * w * w));
          break;
        }
        case 1:  // vertical stroke
          if (std::abs(dy) < s * 0.40) {
            const double d1 = x - x1;
            v = ink * std::exp(-d1 * d1 / tw);
          }
          break;
        case 2:  // horizontal bar
          if (std::abs(dx) < s * 0.38) v = ink * std::exp(-dy * dy / tw);
          break;
        case 3: {  // diagonal
          const double d = (dx - dy) / std::sqrt(2.0);
          v = ink * std::exp(-d * d / tw);
          break;
        }
        case 4:  // cross
          if (std::max(std::abs(dx), std::abs(dy)) < s * 0.38)
            v = ink * std::max(std::exp(-dx * dx / tw), std::exp(-dy * dy / tw));
          break;
        case 5: {  // filled disc
          const double r = std::sqrt(dx * dx + dy * dy);
          v = r < s * 0.25
                  ? ink
                  : ink * std::exp(-(r - s * 0.25) * (r - s * 0.25) / (2.0 * th * th));
          break;
        }
        case 6: {  // corner L
          const bool vert = std::abs(dx + s * 0.2) < th && dy > -s * 0.3;
          const bool hor = std::abs(dy - s * 0.3) < th && dx > -s * 0.25;
          if (vert || hor) v = ink;
          break;
        }
        case 7: {  // top bar + diagonal
          const double d = (dx + dy) / std::sqrt(2.0);
          v = std::abs(dy + s * 0.3) < th ? ink : ink * std::exp(-d * d / tw);
          break;
        }
        case 8: {  // two rings
          const double r1 = std::sqrt(dx * dx + (dy + s * 0.18) * (dy + s * 0.18));
          const double r2 = std::sqrt(dx * dx + (dy - s * 0.18) * (dy - s * 0.18));
          const double w = 2.0 * th * th * 0.81;
          v = ink * std::max(std::exp(-(r1 - s * 0.14) * (r1 - s * 0.14) / w),
                             std::exp(-(r2 - s * 0.14) * (r2 - s * 0.14) / w));
          break;
        }
        default: {  // 9: ring with a tail
          const double r = std::sqrt(dx * dx + (dy + s * 0.12) * (dy + s * 0.12));
          const double w = 2.0 * th * th * 0.81;
          const double ring = std::exp(-(r - s * 0.18) * (r - s * 0.18) / w);
          const double tail = (dy > 0 && std::abs(dx - s * 0.18) < th) ? 0.9 : 0.0;
          v = ink * std::max(ring, tail);
          break;
        }
      }
      img[y * size + x] = v;
    }
  }
  for (auto& p : img) {
    p += 0.01 * rng.next_gaussian();
    p = std::clamp(p, 0.0, 1.0);
  }
  return img;
}

}  // namespace

LabeledDataset make_toy_digits(std::size_t per_class, std::size_t classes,
                               std::size_t size, std::uint64_t seed) {
  if (per_class == 0 || classes == 0 || classes > 10 || size < 8)
    throw std::invalid_argument("make_toy_digits: bad arguments");
  LabeledDataset ds;
  ds.meta.rows = size;
  ds.meta.cols = size;
  ds.meta.channels = 1;
  ds.meta.classes = classes;
  SeededRng root(seed, SeededRng::stream_label("toy"));
  for (std::size_t c = 0; c < classes; ++c) {
    SeededRng rng = root.derive(c);
    for (std::size_t i = 0; i < per_class; ++i) {
      ds.images.push_back(draw_glyph(c, size, rng));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace feta
