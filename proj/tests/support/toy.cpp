#include "support/toy.hpp"

namespace feta::testing {

LabeledDataset toy8x8(std::size_t per_class, std::uint64_t seed, std::size_t classes) {
  return downscale(make_toy_digits(per_class, classes, 16, seed), 2);
}

CurriculumConfig toy_config(std::uint64_t seed) {
  CurriculumConfig cfg;  // the compiled-in defaults are the toy profile
  cfg.seed = seed;
  cfg.rows = 8;
  cfg.cols = 8;
  cfg.channels = 1;
  return cfg;
}

}  // namespace feta::testing
