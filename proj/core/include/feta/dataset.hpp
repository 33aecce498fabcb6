#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "feta/linalg.hpp"

namespace feta {

struct DatasetMeta {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t channels = 1;
  std::size_t classes = 0;
};

// Flat [0,1] pixel vectors with integer class labels. Images are vectorized
// channel-major: index = (ch * rows + r) * cols + c.
struct LabeledDataset {
  std::vector<Vec> images;
  std::vector<std::size_t> labels;
  DatasetMeta meta;

  std::size_t size() const { return images.size(); }
  std::size_t dim() const { return meta.rows * meta.cols * meta.channels; }
  // The public dataset-size estimate N*; treated as equal to N.
  std::size_t n_star() const { return images.size(); }

  std::vector<std::size_t> class_indices(std::size_t c) const;
  std::vector<std::size_t> class_counts() const;
  // Every class 0..classes-1 must be nonempty; throws DataError otherwise.
  void validate_for_training() const;
};

// Standard IDX readers/writers (big-endian magic 0x00000803 for images with
// dims N x rows x cols, 0x00000801 for labels). Pixels are scaled from 0..255
// into [0,1] on load and re-quantized with round-half-up on save.
LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path);
void save_idx(const LabeledDataset& ds, const std::filesystem::path& image_path,
              const std::filesystem::path& label_path);

// Non-overlapping average pooling by an integer factor.
LabeledDataset downscale(const LabeledDataset& ds, std::size_t factor);

// Deterministic procedural digit glyphs (ellipse, stroke, bar, ...), used for
// self-contained desk-scale experiments. classes <= 10.
LabeledDataset make_toy_digits(std::size_t per_class, std::size_t classes,
                               std::size_t size, std::uint64_t seed);

}  // namespace feta
