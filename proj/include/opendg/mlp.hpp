#pragma once

#include <cstddef>
#include <vector>

#include "opendg/matrix.hpp"
#include "opendg/rng.hpp"

namespace opendg {

enum class Activation { kIdentity, kRelu };

// One affine layer: out = in * weight + bias, followed by the activation.
// weight is (in_dim x out_dim) so batches multiply from the left.
struct Layer {
  Matrix weight;
  std::vector<double> bias;
  Activation act = Activation::kIdentity;

  std::size_t in_dim() const { return weight.rows; }
  std::size_t out_dim() const { return weight.cols; }
};

// A stack of affine+activation layers. An empty stack is the identity map.
struct Mlp {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  std::size_t parameter_count() const;
  bool same_structure(const Mlp& other) const;
};

struct LayerGradients {
  Matrix weight;
  std::vector<double> bias;
};

struct MlpGradients {
  std::vector<LayerGradients> layers;

  void add_scaled(const MlpGradients& other, double scale = 1.0);
  void scale(double factor);
  double squared_norm() const;
};

// Pre- and post-activation values of one forward pass, kept for backward.
struct ForwardCache {
  const Mlp* owner = nullptr;
  Matrix input;
  std::vector<Matrix> pre;   // affine outputs per layer
  std::vector<Matrix> post;  // activated outputs per layer
};

// Glorot-uniform initialization: each layer uniform in
// +/- sqrt(6 / (fan_in + fan_out)), biases zero.
Mlp make_mlp(const std::vector<std::size_t>& widths, Activation hidden_act,
             Activation output_act, Rng& rng);

// Deterministic forward pass; fills `cache` when given. Throws ShapeError
// if input width does not match the first layer.
Matrix mlp_forward(const Mlp& params, const Matrix& input, ForwardCache* cache = nullptr);

// Analytic gradients of a scalar loss with upstream dL/d(output). Also
// produces dL/d(input) when `input_grad` is non-null -- mixup mixes in
// feature space, so losses must backpropagate into extractor outputs.
// Throws ContractError when the cache does not belong to `params`.
MlpGradients mlp_backward(const Mlp& params, const ForwardCache& cache,
                          const Matrix& upstream_grad, Matrix* input_grad = nullptr);

MlpGradients zero_gradients(const Mlp& params);

// p -= lr * g for every parameter.
void apply_gradients(Mlp& params, const MlpGradients& grads, double lr);

}  // namespace opendg
