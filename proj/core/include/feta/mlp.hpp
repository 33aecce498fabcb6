#pragma once

#include <cstddef>
#include <vector>

#include "feta/linalg.hpp"
#include "feta/rng.hpp"

namespace feta {

enum class OutputActivation {
  kIdentity,
  kSigmoid,  // squashes the output head into (0, 1)
};

// Fully connected network with tanh hidden units. tanh is fixed so that
// finite-difference gradient checks stay clean (no kinks).
struct Mlp {
  std::vector<std::size_t> dims;      // layer_dims, length >= 2
  std::vector<Matrix> weights;        // weights[l] has shape dims[l+1] x dims[l]
  std::vector<Vec> biases;            // biases[l] has length dims[l+1]
  OutputActivation out_act = OutputActivation::kIdentity;

  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
};

// Weights ~ N(0, 1/fan_in), biases zero.
Mlp make_mlp(const std::vector<std::size_t>& dims, OutputActivation out_act,
             SeededRng& rng);

Vec mlp_forward(const Mlp& net, const Vec& input);

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;
  Vec input;  // gradient with respect to the input vector
};

// Gradients of (output . output_grad) with respect to every parameter and the
// input. Recomputes the forward pass internally.
MlpGradients mlp_backward(const Mlp& net, const Vec& input, const Vec& output_grad);

std::size_t param_count(const Mlp& net);

// Flat parameter order: per layer, weight matrix row-major, then bias.
// This is also the checkpoint order.
Vec flatten_params(const Mlp& net);
void set_params(Mlp& net, const Vec& flat);
Vec flatten_grads(const Mlp& net, const MlpGradients& g);

}  // namespace feta
