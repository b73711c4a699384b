#include "opendg/mlp.hpp"

#include <cmath>
#include <string>

#include "opendg/errors.hpp"

namespace opendg {

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
  return n;
}

bool Mlp::same_structure(const Mlp& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in_dim() != other.layers[i].in_dim() ||
        layers[i].out_dim() != other.layers[i].out_dim() ||
        layers[i].act != other.layers[i].act) {
      return false;
    }
  }
  return true;
}

void MlpGradients::add_scaled(const MlpGradients& other, double scale) {
  if (layers.size() != other.layers.size()) {
    throw ShapeError("MlpGradients::add_scaled: layer count mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    ::opendg::add_scaled(layers[i].weight, other.layers[i].weight, scale);
    if (layers[i].bias.size() != other.layers[i].bias.size()) {
      throw ShapeError("MlpGradients::add_scaled: bias size mismatch");
    }
    for (std::size_t j = 0; j < layers[i].bias.size(); ++j) {
      layers[i].bias[j] += scale * other.layers[i].bias[j];
    }
  }
}

void MlpGradients::scale(double factor) {
  for (auto& l : layers) {
    for (auto& v : l.weight.data) v *= factor;
    for (auto& v : l.bias) v *= factor;
  }
}

double MlpGradients::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) {
    for (double v : l.weight.data) s += v * v;
    for (double v : l.bias) s += v * v;
  }
  return s;
}

Mlp make_mlp(const std::vector<std::size_t>& widths, Activation hidden_act,
             Activation output_act, Rng& rng) {
  if (widths.size() < 2) {
    throw ConfigError("make_mlp: need at least input and output widths");
  }
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer layer;
    const std::size_t fan_in = widths[i];
    const std::size_t fan_out = widths[i + 1];
    if (fan_in == 0 || fan_out == 0) {
      throw ConfigError("make_mlp: zero layer width");
    }
    layer.weight = Matrix(fan_in, fan_out);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& w : layer.weight.data) w = rng.uniform(-bound, bound);
    layer.bias.assign(fan_out, 0.0);
    layer.act = (i + 2 < widths.size()) ? hidden_act : output_act;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

Matrix mlp_forward(const Mlp& params, const Matrix& input, ForwardCache* cache) {
  if (!params.layers.empty() && input.cols != params.input_dim()) {
    throw ShapeError("mlp_forward: input width " + std::to_string(input.cols) +
                     " != first-layer width " + std::to_string(params.input_dim()));
  }
  if (cache) {
    cache->owner = &params;
    cache->input = input;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix x = input;
  for (const auto& layer : params.layers) {
    Matrix pre = matmul(x, layer.weight);
    for (std::size_t i = 0; i < pre.rows; ++i) {
      double* row = pre.row_ptr(i);
      for (std::size_t j = 0; j < pre.cols; ++j) row[j] += layer.bias[j];
    }
    Matrix post = pre;
    if (layer.act == Activation::kRelu) {
      for (auto& v : post.data) v = v > 0.0 ? v : 0.0;
    }
    if (cache) {
      cache->pre.push_back(pre);
      cache->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

MlpGradients mlp_backward(const Mlp& params, const ForwardCache& cache,
                          const Matrix& upstream_grad, Matrix* input_grad) {
  if (cache.owner != &params || cache.pre.size() != params.layers.size()) {
    throw ContractError("mlp_backward: cache does not match these parameters");
  }
  if (!params.layers.empty() &&
      (upstream_grad.rows != cache.input.rows ||
       upstream_grad.cols != params.output_dim())) {
    throw ContractError("mlp_backward: upstream gradient shape mismatch");
  }
  MlpGradients grads = zero_gradients(params);
  Matrix delta = upstream_grad;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Layer& layer = params.layers[li];
    if (layer.act == Activation::kRelu) {
      const Matrix& pre = cache.pre[li];
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        if (pre.data[i] <= 0.0) delta.data[i] = 0.0;
      }
    }
    const Matrix& layer_in = (li == 0) ? cache.input : cache.post[li - 1];
    grads.layers[li].weight = matmul(transpose(layer_in), delta);
    for (std::size_t j = 0; j < layer.out_dim(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < delta.rows; ++i) s += delta.at(i, j);
      grads.layers[li].bias[j] = s;
    }
    if (li > 0 || input_grad) {
      delta = matmul(delta, transpose(layer.weight));
    }
  }
  if (input_grad) *input_grad = std::move(delta);
  return grads;
}

MlpGradients zero_gradients(const Mlp& params) {
  MlpGradients grads;
  grads.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    LayerGradients lg;
    lg.weight = Matrix(layer.in_dim(), layer.out_dim());
    lg.bias.assign(layer.out_dim(), 0.0);
    grads.layers.push_back(std::move(lg));
  }
  return grads;
}

void apply_gradients(Mlp& params, const MlpGradients& grads, double lr) {
  if (grads.layers.size() != params.layers.size()) {
    throw ShapeError("apply_gradients: layer count mismatch");
  }
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    Layer& layer = params.layers[li];
    const LayerGradients& lg = grads.layers[li];
    if (!layer.weight.same_shape(lg.weight) || layer.bias.size() != lg.bias.size()) {
      throw ShapeError("apply_gradients: gradient shape mismatch at layer " +
                       std::to_string(li));
    }
    add_scaled(layer.weight, lg.weight, -lr);
    for (std::size_t j = 0; j < layer.bias.size(); ++j) {
      layer.bias[j] -= lr * lg.bias[j];
    }
  }
}

}  // namespace opendg
