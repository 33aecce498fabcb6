#include "feta/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace feta {

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(Vec& x, double a) {
  for (auto& v : x) v *= a;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, OutputActivation out_act,
             SeededRng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least two layer dims");
  for (auto d : dims)
    if (d == 0) throw std::invalid_argument("mlp layer dims must be positive");
  Mlp net;
  net.dims = dims;
  net.out_act = out_act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix w(dims[l + 1], dims[l]);
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (auto& v : w.data) v = s * rng.next_gaussian();
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(dims[l + 1], 0.0);
  }
  return net;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Forward pass keeping post-activation values of every layer.
std::vector<Vec> forward_acts(const Mlp& net, const Vec& input) {
  if (input.size() != net.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  std::vector<Vec> acts;
  acts.reserve(net.weights.size() + 1);
  acts.push_back(input);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Matrix& w = net.weights[l];
    const Vec& x = acts.back();
    Vec z = net.biases[l];
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double* wr = &w.data[r * w.cols];
      double s = z[r];
      for (std::size_t c = 0; c < w.cols; ++c) s += wr[c] * x[c];
      z[r] = s;
    }
    const bool last = (l + 1 == net.weights.size());
    if (!last) {
      for (auto& v : z) v = std::tanh(v);
    } else if (net.out_act == OutputActivation::kSigmoid) {
      for (auto& v : z) v = sigmoid(v);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

Vec mlp_forward(const Mlp& net, const Vec& input) {
  return forward_acts(net, input).back();
}

MlpGradients mlp_backward(const Mlp& net, const Vec& input, const Vec& output_grad) {
  if (output_grad.size() != net.output_dim())
    throw std::invalid_argument("mlp_backward: output_grad dimension mismatch");
  const auto acts = forward_acts(net, input);

  MlpGradients g;
  g.weights.resize(net.weights.size());
  g.biases.resize(net.biases.size());

  Vec delta = output_grad;
  for (std::size_t li = net.weights.size(); li-- > 0;) {
    const Vec& out = acts[li + 1];
    const bool last = (li + 1 == net.weights.size());
    if (!last) {
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - out[i] * out[i];
    } else if (net.out_act == OutputActivation::kSigmoid) {
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= out[i] * (1.0 - out[i]);
    }
    const Vec& x = acts[li];
    Matrix gw(net.weights[li].rows, net.weights[li].cols);
    for (std::size_t r = 0; r < gw.rows; ++r) {
      double* row = &gw.data[r * gw.cols];
      const double d = delta[r];
      for (std::size_t c = 0; c < gw.cols; ++c) row[c] = d * x[c];
    }
    g.weights[li] = std::move(gw);
    g.biases[li] = delta;

    Vec prev(net.weights[li].cols, 0.0);
    const Matrix& w = net.weights[li];
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double* wr = &w.data[r * w.cols];
      const double d = delta[r];
      for (std::size_t c = 0; c < w.cols; ++c) prev[c] += d * wr[c];
    }
    delta = std::move(prev);
  }
  g.input = std::move(delta);
  return g;
}

std::size_t param_count(const Mlp& net) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l)
    n += net.dims[l + 1] * net.dims[l] + net.dims[l + 1];
  return n;
}

Vec flatten_params(const Mlp& net) {
  Vec flat;
  flat.reserve(param_count(net));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    flat.insert(flat.end(), net.weights[l].data.begin(), net.weights[l].data.end());
    flat.insert(flat.end(), net.biases[l].begin(), net.biases[l].end());
  }
  return flat;
}

void set_params(Mlp& net, const Vec& flat) {
  if (flat.size() != param_count(net))
    throw std::invalid_argument("set_params: flat size mismatch");
  std::size_t off = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto& w = net.weights[l].data;
    std::copy(flat.begin() + off, flat.begin() + off + w.size(), w.begin());
    off += w.size();
    auto& b = net.biases[l];
    std::copy(flat.begin() + off, flat.begin() + off + b.size(), b.begin());
    off += b.size();
  }
}

Vec flatten_grads(const Mlp& net, const MlpGradients& g) {
  Vec flat;
  flat.reserve(param_count(net));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    flat.insert(flat.end(), g.weights[l].data.begin(), g.weights[l].data.end());
    flat.insert(flat.end(), g.biases[l].begin(), g.biases[l].end());
  }
  return flat;
}

}  // namespace feta
