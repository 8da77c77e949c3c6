#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dpvm/tensor.hpp"

namespace dpvm {

enum class Activation { identity, relu };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

template <typename T>
struct DenseLayer {
  ParamTensor<T> weight;  // in x out
  ParamTensor<T> bias;    // 1 x out
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Activation act)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out), activation(act) {}

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  // Symmetric uniform in +-sqrt(3/fan_in) (x sqrt(2) ahead of a relu); zero bias.
  template <typename Rng>
  void init(Rng& rng) {
    double limit = std::sqrt(3.0 / static_cast<double>(in_dim()));
    if (activation == Activation::relu) limit *= std::sqrt(2.0);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : weight.value.values()) w = static_cast<T>(dist(rng));
    bias.value.fill(T(0));
  }

  template <typename U>
  DenseLayer<U> cast() const {
    DenseLayer<U> out;
    out.weight = weight.template cast<U>();
    out.bias = bias.template cast<U>();
    out.activation = activation;
    return out;
  }
};

/// What a backward pass needs from the forward pass.
template <typename T>
struct DenseCache {
  Tensor2<T> input;
  Tensor2<T> pre;  // x W + b, before the activation
};

template <typename T>
Tensor2<T> dense_forward(const Tensor2<T>& x, const ParamTensor<T>& weights,
                         const ParamTensor<T>& bias, Activation activation,
                         DenseCache<T>* cache = nullptr) {
  const auto& w = weights.value;
  const auto& b = bias.value;
  if (x.cols() != w.rows())
    throw ConfigError("dense_forward: input " + x.shape() + " does not match weights " +
                      w.shape() + " (" + weights.name + ")");
  if (b.rows() != 1 || b.cols() != w.cols())
    throw ConfigError("dense_forward: bias " + b.shape() + " does not match weights " +
                      w.shape() + " (" + bias.name + ")");
  Tensor2<T> pre = matmul(x, w);
  for (std::size_t r = 0; r < pre.rows(); ++r) {
    auto row = pre.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b(0, c);
  }
  Tensor2<T> out = pre;
  if (activation == Activation::relu)
    for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
  }
  return out;
}

template <typename T>
Tensor2<T> dense_forward(const Tensor2<T>& x, const DenseLayer<T>& layer,
                         DenseCache<T>* cache = nullptr) {
  return dense_forward(x, layer.weight, layer.bias, layer.activation, cache);
}

/// Accumulates parameter gradients into layer and returns dL/dx.
template <typename T>
Tensor2<T> dense_backward(DenseLayer<T>& layer, const DenseCache<T>& cache, Tensor2<T> dy) {
  if (dy.rows() != cache.pre.rows() || dy.cols() != cache.pre.cols())
    throw ConfigError("dense_backward: upstream " + dy.shape() + " vs output " +
                      cache.pre.shape());
  if (layer.activation == Activation::relu) {
    auto d = dy.values();
    auto p = cache.pre.values();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(p[i] > T(0))) d[i] = T(0);
  }
  matmul_at_b_acc(cache.input, dy, layer.weight.grad);
  auto& gb = layer.bias.grad;
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) gb(0, c) += row[c];
  }
  return matmul_a_bt(dy, layer.weight.value);
}

/// Sequential stack of dense layers.
template <typename T>
struct LayerStack {
  std::vector<DenseLayer<T>> layers;

  using Cache = std::vector<DenseCache<T>>;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  Tensor2<T> forward(const Tensor2<T>& x, Cache* cache = nullptr) const {
    if (cache) cache->assign(layers.size(), {});
    Tensor2<T> h = x;
    for (std::size_t i = 0; i < layers.size(); ++i)
      h = dense_forward(h, layers[i], cache ? &(*cache)[i] : nullptr);
    return h;
  }

  Tensor2<T> backward(const Cache& cache, Tensor2<T> dy) {
    for (std::size_t i = layers.size(); i-- > 0;) dy = dense_backward(layers[i], cache[i], std::move(dy));
    return dy;
  }

  template <typename U>
  LayerStack<U> cast() const {
    LayerStack<U> out;
    for (const auto& l : layers) out.layers.push_back(l.template cast<U>());
    return out;
  }
};

/// Smallest |pre-activation| over the relu units of a cached stack. Finite
/// differences are unreliable when this is near zero.
template <typename T>
T relu_kink_distance(const LayerStack<T>& stack, const typename LayerStack<T>::Cache& cache) {
  T best = std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < cache.size(); ++i) {
    if (stack.layers[i].activation != Activation::relu) continue;
    for (T p : cache[i].pre.values()) best = std::min(best, std::abs(p));
  }
  return best;
}

}  // namespace dpvm
