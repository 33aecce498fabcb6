#pragma once

// Shared toy fixtures for tests and the acceptance suite.

#include <cstdint>

#include "feta/config.hpp"
#include "feta/dataset.hpp"

namespace feta::testing {

// 2-class 8x8 set: 16x16 procedural glyphs average-pooled by 2.
LabeledDataset toy8x8(std::size_t per_class, std::uint64_t seed,
                      std::size_t classes = 2);

// Desk-scale curriculum defaults wired for the 8x8 toy problem.
CurriculumConfig toy_config(std::uint64_t seed);

}  // namespace feta::testing
