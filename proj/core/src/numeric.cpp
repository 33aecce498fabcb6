#include "feta/numeric.hpp"

#include <cmath>
#include <stdexcept>

#include "feta/errors.hpp"

namespace feta {

Vec gaussian_vector(SeededRng& rng, std::size_t dim, double std) {
  if (dim == 0) throw std::invalid_argument("gaussian_vector: dim must be >= 1");
  if (!std::isfinite(std) || std < 0.0)
    throw std::invalid_argument("gaussian_vector: std must be finite and >= 0");
  Vec v(dim, 0.0);
  if (std == 0.0) return v;
  for (auto& x : v) x = std * rng.next_gaussian();
  return v;
}

std::vector<std::size_t> poisson_subsample(SeededRng& rng, std::size_t n, double q) {
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("poisson_subsample: q must be in [0, 1]");
  std::vector<std::size_t> out;
  if (q == 0.0) return out;
  if (q == 1.0) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (rng.next_double() < q) out.push_back(i);
  return out;
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                     double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Vec g(x.size());
  Vec p = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    p[i] = xi + h;
    const double fp = f(p);
    p[i] = xi - h;
    const double fm = f(p);
    p[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

AdamState make_adam(std::size_t n) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  bool all_zero = true;
  for (double g : grads) {
    if (!std::isfinite(g)) throw DivergenceError("adam_step: non-finite gradient");
    if (g != 0.0) all_zero = false;
  }
  state.step += 1;
  if (all_zero) {
    // an all-zero gradient never changes the parameters; moments still decay
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] *= state.beta1;
      state.v[i] *= state.beta2;
    }
    return;
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + state.eps);
  }
}

}  // namespace feta
