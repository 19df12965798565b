#pragma once

// Sequential network plumbing on top of the layer kernels: named weight
// blocks, Glorot init, cached forward pass, reverse-mode backward for the
// whole stack, and plain SGD with per-block freeze flags.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "quickloc/layers.hpp"
#include "quickloc/tensor.hpp"

namespace quickloc {

template <typename T>
struct ParamBlockT {
  std::vector<int> w_dims;  // conv: {kh,kw,cin,f}; depthwise: {kh,kw,c}; dense: {n,m}
  std::vector<T> w;
  std::vector<T> b;
  bool frozen = false;

  std::int64_t param_count() const {
    return static_cast<std::int64_t>(w.size() + b.size());
  }
};

// Ordered, name-keyed block storage. Order is the serialization order.
template <typename T>
struct WeightStoreT {
  std::vector<std::pair<std::string, ParamBlockT<T>>> blocks;

  ParamBlockT<T>& add(const std::string& name) {
    blocks.emplace_back(name, ParamBlockT<T>{});
    return blocks.back().second;
  }
  ParamBlockT<T>* find(const std::string& name) {
    for (auto& [n, b] : blocks)
      if (n == name) return &b;
    return nullptr;
  }
  const ParamBlockT<T>* find(const std::string& name) const {
    for (auto& [n, b] : blocks)
      if (n == name) return &b;
    return nullptr;
  }
  ParamBlockT<T>& get(const std::string& name) {
    if (auto* b = find(name)) return *b;
    throw InvalidArgument("no weight block named '" + name + "'");
  }
  const ParamBlockT<T>& get(const std::string& name) const {
    if (auto* b = find(name)) return *b;
    throw InvalidArgument("no weight block named '" + name + "'");
  }
  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& [_, b] : blocks) n += b.param_count();
    return n;
  }
};

using ParamBlock = ParamBlockT<Real>;
using WeightStore = WeightStoreT<Real>;
// Same keying and shapes as the weight store, holding dLoss/dw.
using GradientStore = WeightStoreT<Real>;

namespace detail {

template <typename T>
void glorot_fill(std::vector<T>& w, std::int64_t fan_in, std::int64_t fan_out,
                 std::mt19937& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& v : w) v = static_cast<T>(dist(rng));
}

}  // namespace detail

// Allocate and initialize the block for one trainable layer: weights uniform
// in +/-sqrt(6/(fan_in+fan_out)), biases zero.
template <typename T>
ParamBlockT<T> init_layer_block(const LayerSpec& l, Shape3 in, std::mt19937& rng) {
  ParamBlockT<T> blk;
  switch (l.kind) {
    case LayerKind::Conv2d: {
      blk.w_dims = {l.kernel_h, l.kernel_w, in.channels, l.units};
      blk.w.resize(static_cast<std::size_t>(l.kernel_h) * l.kernel_w * in.channels *
                   l.units);
      blk.b.assign(l.units, T(0));
      const std::int64_t k2 = static_cast<std::int64_t>(l.kernel_h) * l.kernel_w;
      detail::glorot_fill(blk.w, k2 * in.channels, k2 * l.units, rng);
      break;
    }
    case LayerKind::DepthwiseConv2d: {
      blk.w_dims = {l.kernel_h, l.kernel_w, in.channels};
      blk.w.resize(static_cast<std::size_t>(l.kernel_h) * l.kernel_w * in.channels);
      blk.b.assign(in.channels, T(0));
      const std::int64_t k2 = static_cast<std::int64_t>(l.kernel_h) * l.kernel_w;
      detail::glorot_fill(blk.w, k2, k2, rng);
      break;
    }
    case LayerKind::PointwiseConv2d: {
      blk.w_dims = {1, 1, in.channels, l.units};
      blk.w.resize(static_cast<std::size_t>(in.channels) * l.units);
      blk.b.assign(l.units, T(0));
      detail::glorot_fill(blk.w, in.channels, l.units, rng);
      break;
    }
    case LayerKind::Dense: {
      const int n = static_cast<int>(in.flat());
      blk.w_dims = {n, l.units};
      blk.w.resize(static_cast<std::size_t>(n) * l.units);
      blk.b.assign(l.units, T(0));
      detail::glorot_fill(blk.w, n, l.units, rng);
      break;
    }
    default:
      throw InvalidArgument("layer has no weights: " +
                            std::string(layer_kind_name(l.kind)));
  }
  return blk;
}

// Run one layer. Trainable kinds pull their block from the store by name.
template <typename T>
Tensor3T<T> forward_layer(const LayerSpec& l, const WeightStoreT<T>& weights,
                          const Tensor3T<T>& in) {
  switch (l.kind) {
    case LayerKind::Conv2d: {
      const auto& blk = weights.get(l.name);
      return conv2d_forward(in, blk.w, blk.b, l.kernel_h, l.kernel_w, l.stride);
    }
    case LayerKind::DepthwiseConv2d: {
      const auto& blk = weights.get(l.name);
      return depthwise_conv2d_forward(in, blk.w, blk.b, l.kernel_h, l.kernel_w,
                                      l.stride);
    }
    case LayerKind::PointwiseConv2d: {
      const auto& blk = weights.get(l.name);
      return pointwise_conv2d_forward(in, blk.w, blk.b);
    }
    case LayerKind::MaxPool:
      return maxpool_forward(in, l.kernel_h, l.kernel_w, l.stride);
    case LayerKind::Dense: {
      const auto& blk = weights.get(l.name);
      if (in.height != 1 || in.width != 1)
        throw ShapeError("dense requires flattened input, got " + in.shape().str());
      Tensor3T<T> out(1, 1, l.units);
      out.data = dense_forward(in.data, blk.w, blk.b);
      return out;
    }
    case LayerKind::Relu:
      return relu(in);
    case LayerKind::Softmax: {
      Tensor3T<T> out = in;
      out.data = softmax(in.data);
      return out;
    }
    case LayerKind::Flatten: {
      Tensor3T<T> out(1, 1, static_cast<int>(in.shape().flat()));
      out.data = in.data;
      return out;
    }
  }
  throw ShapeError("unknown layer kind");
}

template <typename T>
Tensor3T<T> forward_stack(const std::vector<LayerSpec>& layers,
                          const WeightStoreT<T>& weights, const Tensor3T<T>& input) {
  Tensor3T<T> a = input;
  for (const auto& l : layers) a = forward_layer(l, weights, a);
  return a;
}

// Forward pass keeping every activation: act[0] = input, act[i+1] = layer i out.
template <typename T>
std::vector<Tensor3T<T>> forward_cached(const std::vector<LayerSpec>& layers,
                                        const WeightStoreT<T>& weights,
                                        const Tensor3T<T>& input) {
  std::vector<Tensor3T<T>> act;
  act.reserve(layers.size() + 1);
  act.push_back(input);
  for (const auto& l : layers) act.push_back(forward_layer(l, weights, act.back()));
  return act;
}

// Gradients of cross_entropy(softmax output, true_class) w.r.t. every
// trainable block in the stack. The stack must end in softmax; the combined
// softmax+cross-entropy gradient (p - onehot) seeds the reverse sweep.
template <typename T>
WeightStoreT<T> backward(const std::vector<LayerSpec>& layers,
                         const WeightStoreT<T>& weights, const Tensor3T<T>& input,
                         int true_class,
                         const std::vector<Tensor3T<T>>* cached = nullptr) {
  if (layers.empty() || layers.back().kind != LayerKind::Softmax)
    throw InvalidArgument("backward: stack must end in softmax");
  std::vector<Tensor3T<T>> local;
  if (!cached) {
    local = forward_cached(layers, weights, input);
    cached = &local;
  }
  const auto& act = *cached;
  const auto& probs = act.back();
  if (true_class < 0 || true_class >= static_cast<int>(probs.data.size()))
    throw InvalidArgument("backward: class out of range");

  WeightStoreT<T> grads;
  Tensor3T<T> delta = probs;
  delta.data[true_class] -= T(1);

  for (int i = static_cast<int>(layers.size()) - 2; i >= 0; --i) {
    const auto& l = layers[i];
    const auto& in = act[i];
    Tensor3T<T> din;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const auto& blk = weights.get(l.name);
        auto& g = grads.add(l.name);
        g.w_dims = blk.w_dims;
        conv2d_backward(in, blk.w, l.kernel_h, l.kernel_w, l.stride, delta, g.w,
                        g.b, din);
        break;
      }
      case LayerKind::DepthwiseConv2d: {
        const auto& blk = weights.get(l.name);
        auto& g = grads.add(l.name);
        g.w_dims = blk.w_dims;
        depthwise_conv2d_backward(in, blk.w, l.kernel_h, l.kernel_w, l.stride,
                                  delta, g.w, g.b, din);
        break;
      }
      case LayerKind::PointwiseConv2d: {
        const auto& blk = weights.get(l.name);
        auto& g = grads.add(l.name);
        g.w_dims = blk.w_dims;
        conv2d_backward(in, blk.w, 1, 1, 1, delta, g.w, g.b, din);
        break;
      }
      case LayerKind::MaxPool:
        maxpool_backward(in, l.kernel_h, l.kernel_w, l.stride, delta, din);
        break;
      case LayerKind::Dense: {
        const auto& blk = weights.get(l.name);
        auto& g = grads.add(l.name);
        g.w_dims = blk.w_dims;
        din = Tensor3T<T>(in.shape());
        dense_backward(in.data, blk.w, delta.data, g.w, g.b, din.data);
        break;
      }
      case LayerKind::Relu:
        relu_backward(in, delta, din);
        break;
      case LayerKind::Flatten:
        din = Tensor3T<T>(in.shape());
        din.data = delta.data;
        break;
      case LayerKind::Softmax:
        throw InvalidArgument("backward: softmax only supported as final layer");
    }
    delta = std::move(din);
  }
  return grads;
}

// w <- w - lr * g per element, skipping frozen blocks. Blocks without a
// matching gradient entry are left untouched.
template <typename T>
void sgd_step(WeightStoreT<T>& weights, const WeightStoreT<T>& grads, double lr) {
  for (auto& [name, blk] : weights.blocks) {
    if (blk.frozen) continue;
    const auto* g = grads.find(name);
    if (!g) continue;
    if (g->w.size() != blk.w.size() || g->b.size() != blk.b.size())
      throw ShapeError("sgd_step: gradient block '" + name +
                       "' is not shape-congruent with weights");
    for (std::size_t i = 0; i < blk.w.size(); ++i)
      blk.w[i] -= static_cast<T>(lr * g->w[i]);
    for (std::size_t i = 0; i < blk.b.size(); ++i)
      blk.b[i] -= static_cast<T>(lr * g->b[i]);
  }
}

// In-place grad accumulation / scaling, used for mini-batch averaging.
template <typename T>
void accumulate(WeightStoreT<T>& into, const WeightStoreT<T>& g) {
  for (const auto& [name, gb] : g.blocks) {
    auto* tb = into.find(name);
    if (!tb) {
      into.add(name) = gb;
      continue;
    }
    for (std::size_t i = 0; i < gb.w.size(); ++i) tb->w[i] += gb.w[i];
    for (std::size_t i = 0; i < gb.b.size(); ++i) tb->b[i] += gb.b[i];
  }
}

template <typename T>
void scale(WeightStoreT<T>& store, double s) {
  for (auto& [_, blk] : store.blocks) {
    for (auto& v : blk.w) v = static_cast<T>(v * s);
    for (auto& v : blk.b) v = static_cast<T>(v * s);
  }
}

// Per-layer parameter counts for a stack, in layer order (trainable only).
inline std::vector<std::pair<std::string, std::int64_t>> param_count_stack(
    const std::vector<LayerSpec>& layers, Shape3 input) {
  std::vector<std::pair<std::string, std::int64_t>> rows;
  Shape3 s = input;
  for (const auto& l : layers) {
    if (l.trainable()) rows.emplace_back(l.name, layer_param_count(l, s));
    s = layer_output_shape(l, s);
  }
  return rows;
}

// MACs of the first `prefix_len` layers of a stack.
inline std::int64_t mac_count_prefix(const std::vector<LayerSpec>& layers,
                                     Shape3 input, std::size_t prefix_len) {
  std::int64_t macs = 0;
  Shape3 s = input;
  for (std::size_t i = 0; i < layers.size() && i < prefix_len; ++i) {
    macs += layer_mac_count(layers[i], s);
    s = layer_output_shape(layers[i], s);
  }
  return macs;
}

}  // namespace quickloc
