#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "feta/linalg.hpp"
#include "feta/rng.hpp"

namespace feta {

// dim i.i.d. draws from N(0, std^2). std = 0 returns the zero vector without
// consuming any draws.
Vec gaussian_vector(SeededRng& rng, std::size_t dim, double std);

// Each index in [0, n) is included independently with probability q. May be
// empty. Indices come back sorted ascending.
std::vector<std::size_t> poisson_subsample(SeededRng& rng, std::size_t n, double q);

// Central-difference gradient estimate, (f(x+h e_i) - f(x-h e_i)) / (2h).
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double h);

struct AdamState {
  Vec m;  // first-moment accumulator
  Vec v;  // second-moment accumulator
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(std::size_t n);

// Standard Adam update with bias correction. Throws DivergenceError on
// non-finite gradients.
void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr);

}  // namespace feta
