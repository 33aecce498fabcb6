#pragma once

#include <cstdint>
#include <string_view>

namespace feta {

// Deterministic, splittable random stream. A (seed, stream_id) pair fully
// determines the sequence of draws on every platform: the state is derived
// with splitmix64 and advanced with xoshiro256**, and normal variates use
// Box-Muller on 53-bit uniforms. No standard-library distributions are
// involved anywhere, so DP noise is reproducible bit-for-bit across runs.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53 bits of mantissa.
  double next_double();

  // Standard normal. Box-Muller; the second variate of each pair is cached.
  double next_gaussian();

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  // Child stream, independent of this one and of any sibling with a
  // different label. Chainable: derive(a).derive(b) != derive(b).derive(a).
  SeededRng derive(std::uint64_t label) const;
  SeededRng derive(std::string_view name) const;

  // FNV-1a, for naming sub-streams ("rff", "spatial", ...).
  static std::uint64_t stream_label(std::string_view name);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t state_[4] = {};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace feta
