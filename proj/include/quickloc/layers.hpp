#pragma once

// Layer zoo for the fingerprint CNNs: plain/depthwise/pointwise convolutions,
// max pooling, dense, relu, softmax, flatten. Forward and reverse-mode
// kernels are free functions templated on the scalar type; LayerSpec plus
// shape propagation drives them generically.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "quickloc/error.hpp"
#include "quickloc/tensor.hpp"

namespace quickloc {

enum class LayerKind {
  Conv2d,
  DepthwiseConv2d,
  PointwiseConv2d,
  MaxPool,
  Dense,
  Relu,
  Softmax,
  Flatten,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;  // trainable layers bind to a weight block by this name
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int units = 0;  // conv: filter count; dense: neuron count

  static LayerSpec conv2d(std::string name, int k, int filters, int stride = 1) {
    return {LayerKind::Conv2d, std::move(name), k, k, stride, filters};
  }
  static LayerSpec depthwise(std::string name, int k, int stride = 1) {
    return {LayerKind::DepthwiseConv2d, std::move(name), k, k, stride, 0};
  }
  static LayerSpec pointwise(std::string name, int filters) {
    return {LayerKind::PointwiseConv2d, std::move(name), 1, 1, 1, filters};
  }
  static LayerSpec maxpool(int k, int stride) {
    return {LayerKind::MaxPool, {}, k, k, stride, 0};
  }
  static LayerSpec dense(std::string name, int neurons) {
    return {LayerKind::Dense, std::move(name), 0, 0, 1, neurons};
  }
  static LayerSpec relu() { return {LayerKind::Relu, {}, 0, 0, 1, 0}; }
  static LayerSpec softmax() { return {LayerKind::Softmax, {}, 0, 0, 1, 0}; }
  static LayerSpec flatten() { return {LayerKind::Flatten, {}, 0, 0, 1, 0}; }

  bool trainable() const {
    return kind == LayerKind::Conv2d || kind == LayerKind::DepthwiseConv2d ||
           kind == LayerKind::PointwiseConv2d || kind == LayerKind::Dense;
  }
};

namespace detail {

inline void check_window(const char* what, Shape3 in, int kh, int kw, int stride) {
  if (stride < 1)
    throw ShapeError(std::string(what) + ": stride must be >= 1, got " +
                     std::to_string(stride));
  if (kh < 1 || kw < 1 || kh > in.height || kw > in.width)
    throw ShapeError(std::string(what) + ": window " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " does not fit input " + in.str());
}

inline int out_extent(int in, int k, int stride) {
  return (in - k) / stride + 1;  // "valid" rule, no padding
}

}  // namespace detail

// Output shape of one layer, throwing ShapeError when the geometry is illegal.
inline Shape3 layer_output_shape(const LayerSpec& l, Shape3 in) {
  using detail::out_extent;
  switch (l.kind) {
    case LayerKind::Conv2d:
      detail::check_window("conv2d", in, l.kernel_h, l.kernel_w, l.stride);
      if (l.units < 1) throw ShapeError("conv2d: needs at least one filter");
      return {out_extent(in.height, l.kernel_h, l.stride),
              out_extent(in.width, l.kernel_w, l.stride), l.units};
    case LayerKind::DepthwiseConv2d:
      detail::check_window("depthwise_conv2d", in, l.kernel_h, l.kernel_w, l.stride);
      return {out_extent(in.height, l.kernel_h, l.stride),
              out_extent(in.width, l.kernel_w, l.stride), in.channels};
    case LayerKind::PointwiseConv2d:
      if (l.units < 1) throw ShapeError("pointwise_conv2d: needs at least one filter");
      return {in.height, in.width, l.units};
    case LayerKind::MaxPool:
      detail::check_window("maxpool", in, l.kernel_h, l.kernel_w, l.stride);
      return {out_extent(in.height, l.kernel_h, l.stride),
              out_extent(in.width, l.kernel_w, l.stride), in.channels};
    case LayerKind::Dense:
      if (in.height != 1 || in.width != 1)
        throw ShapeError("dense requires flattened input, got " + in.str());
      if (l.units < 1) throw ShapeError("dense: needs at least one neuron");
      return {1, 1, l.units};
    case LayerKind::Flatten:
      return {1, 1, static_cast<int>(in.flat())};
    case LayerKind::Relu:
    case LayerKind::Softmax:
      return in;
  }
  throw ShapeError("unknown layer kind");
}

// Trainable parameter count (weights + biases) of one layer.
inline std::int64_t layer_param_count(const LayerSpec& l, Shape3 in) {
  const std::int64_t k2 = static_cast<std::int64_t>(l.kernel_h) * l.kernel_w;
  switch (l.kind) {
    case LayerKind::Conv2d:
      return k2 * in.channels * l.units + l.units;
    case LayerKind::DepthwiseConv2d:
      return k2 * in.channels + in.channels;
    case LayerKind::PointwiseConv2d:
      return static_cast<std::int64_t>(in.channels) * l.units + l.units;
    case LayerKind::Dense:
      return in.flat() * l.units + l.units;
    default:
      return 0;
  }
}

// Multiply-accumulate cost of one layer; activations, pooling and reshapes
// count as zero.
inline std::int64_t layer_mac_count(const LayerSpec& l, Shape3 in) {
  const Shape3 out = layer_output_shape(l, in);
  const std::int64_t pixels = static_cast<std::int64_t>(out.height) * out.width;
  const std::int64_t k2 = static_cast<std::int64_t>(l.kernel_h) * l.kernel_w;
  switch (l.kind) {
    case LayerKind::Conv2d:
      return pixels * l.units * k2 * in.channels;
    case LayerKind::DepthwiseConv2d:
      return pixels * in.channels * k2;
    case LayerKind::PointwiseConv2d:
      return pixels * in.channels * l.units;
    case LayerKind::Dense:
      return in.flat() * l.units;
    default:
      return 0;
  }
}

// ---------------------------------------------------------------------------
// Forward kernels

// filters laid out KhxKwxCinxF (F innermost), bias length F.
template <typename T>
Tensor3T<T> conv2d_forward(const Tensor3T<T>& in, const std::vector<T>& filters,
                           const std::vector<T>& bias, int kh, int kw, int stride) {
  detail::check_window("conv2d", in.shape(), kh, kw, stride);
  const int cin = in.channels;
  const int f = static_cast<int>(bias.size());
  if (f < 1 || filters.size() != static_cast<std::size_t>(kh) * kw * cin * f)
    throw ShapeError("conv2d: filter block is " + std::to_string(filters.size()) +
                     " values, expected " + std::to_string(kh) + "x" +
                     std::to_string(kw) + "x" + std::to_string(cin) + "x" +
                     std::to_string(f));
  Tensor3T<T> out(detail::out_extent(in.height, kh, stride),
                  detail::out_extent(in.width, kw, stride), f);
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      T* acc = &out.at(oy, ox, 0);
      for (int c = 0; c < f; ++c) acc[c] = bias[c];
      for (int ky = 0; ky < kh; ++ky) {
        const T* row = &in.at(oy * stride + ky, ox * stride, 0);
        const T* w = &filters[(static_cast<std::size_t>(ky) * kw) * cin * f];
        for (int kx = 0; kx < kw; ++kx) {
          for (int c = 0; c < cin; ++c) {
            const T x = row[kx * cin + c];
            const T* wrow = w + (static_cast<std::size_t>(kx) * cin + c) * f;
            for (int j = 0; j < f; ++j) acc[j] += x * wrow[j];
          }
        }
      }
    }
  }
  return out;
}

// One KhxKw filter per input channel (layout KhxKwxC, C innermost).
template <typename T>
Tensor3T<T> depthwise_conv2d_forward(const Tensor3T<T>& in,
                                     const std::vector<T>& filters,
                                     const std::vector<T>& bias, int kh, int kw,
                                     int stride) {
  detail::check_window("depthwise_conv2d", in.shape(), kh, kw, stride);
  const int c = in.channels;
  if (static_cast<int>(bias.size()) != c ||
      filters.size() != static_cast<std::size_t>(kh) * kw * c)
    throw ShapeError("depthwise_conv2d: expected one " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " filter per input channel (C=" +
                     std::to_string(c) + ")");
  Tensor3T<T> out(detail::out_extent(in.height, kh, stride),
                  detail::out_extent(in.width, kw, stride), c);
  for (int oy = 0; oy < out.height; ++oy) {
    for (int ox = 0; ox < out.width; ++ox) {
      T* acc = &out.at(oy, ox, 0);
      for (int j = 0; j < c; ++j) acc[j] = bias[j];
      for (int ky = 0; ky < kh; ++ky) {
        const T* row = &in.at(oy * stride + ky, ox * stride, 0);
        const T* w = &filters[static_cast<std::size_t>(ky) * kw * c];
        for (int kx = 0; kx < kw; ++kx)
          for (int j = 0; j < c; ++j) acc[j] += row[kx * c + j] * w[kx * c + j];
      }
    }
  }
  return out;
}

// 1x1 convolution: per-pixel dense remap Cin -> F.
template <typename T>
Tensor3T<T> pointwise_conv2d_forward(const Tensor3T<T>& in,
                                     const std::vector<T>& filters,
                                     const std::vector<T>& bias) {
  return conv2d_forward(in, filters, bias, 1, 1, 1);
}

template <typename T>
Tensor3T<T> maxpool_forward(const Tensor3T<T>& in, int kh, int kw, int stride) {
  detail::check_window("maxpool", in.shape(), kh, kw, stride);
  Tensor3T<T> out(detail::out_extent(in.height, kh, stride),
                  detail::out_extent(in.width, kw, stride), in.channels);
  for (int oy = 0; oy < out.height; ++oy)
    for (int ox = 0; ox < out.width; ++ox)
      for (int c = 0; c < in.channels; ++c) {
        T best = in.at(oy * stride, ox * stride, c);
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx)
            best = std::max(best, in.at(oy * stride + ky, ox * stride + kx, c));
        out.at(oy, ox, c) = best;
      }
  return out;
}

// y = W^T x + b with W stored row-major n x m (input index major).
template <typename T>
std::vector<T> dense_forward(const std::vector<T>& x, const std::vector<T>& w,
                             const std::vector<T>& b) {
  const std::size_t n = x.size();
  const std::size_t m = b.size();
  if (m == 0 || w.size() != n * m)
    throw ShapeError("dense: weight block is " + std::to_string(w.size()) +
                     " values, expected " + std::to_string(n) + "x" +
                     std::to_string(m));
  std::vector<T> y(b);
  for (std::size_t i = 0; i < n; ++i) {
    const T xi = x[i];
    const T* row = &w[i * m];
    for (std::size_t j = 0; j < m; ++j) y[j] += xi * row[j];
  }
  return y;
}

template <typename T>
Tensor3T<T> relu(const Tensor3T<T>& in) {
  Tensor3T<T> out = in;
  for (T& v : out.data) v = std::max(v, T(0));
  return out;
}

// Max-subtracted softmax; invariant under adding a constant to all logits.
template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty input");
  const T top = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (T& v : p) v /= sum;
  return p;
}

// -log p_true, with p clamped to >= 1e-12 before the log.
template <typename T>
double cross_entropy_loss(const std::vector<T>& probs, int true_class) {
  if (true_class < 0 || true_class >= static_cast<int>(probs.size()))
    throw InvalidArgument("cross_entropy_loss: class " + std::to_string(true_class) +
                          " out of range for " + std::to_string(probs.size()) +
                          " probabilities");
  const double p = std::max(static_cast<double>(probs[true_class]), 1e-12);
  return -std::log(p);
}

// ---------------------------------------------------------------------------
// Backward kernels (reverse-mode, per layer)

template <typename T>
void conv2d_backward(const Tensor3T<T>& in, const std::vector<T>& filters, int kh,
                     int kw, int stride, const Tensor3T<T>& dout,
                     std::vector<T>& dfilters, std::vector<T>& dbias,
                     Tensor3T<T>& din) {
  const int cin = in.channels;
  const int f = dout.channels;
  dfilters.assign(filters.size(), T(0));
  dbias.assign(f, T(0));
  din = Tensor3T<T>(in.shape());
  for (int oy = 0; oy < dout.height; ++oy) {
    for (int ox = 0; ox < dout.width; ++ox) {
      const T* g = &dout.at(oy, ox, 0);
      for (int j = 0; j < f; ++j) dbias[j] += g[j];
      for (int ky = 0; ky < kh; ++ky) {
        const T* row = &in.at(oy * stride + ky, ox * stride, 0);
        T* drow = &din.at(oy * stride + ky, ox * stride, 0);
        for (int kx = 0; kx < kw; ++kx) {
          for (int c = 0; c < cin; ++c) {
            const std::size_t woff =
                ((static_cast<std::size_t>(ky) * kw + kx) * cin + c) * f;
            const T x = row[kx * cin + c];
            T dx = 0;
            for (int j = 0; j < f; ++j) {
              dfilters[woff + j] += x * g[j];
              dx += filters[woff + j] * g[j];
            }
            drow[kx * cin + c] += dx;
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_conv2d_backward(const Tensor3T<T>& in, const std::vector<T>& filters,
                               int kh, int kw, int stride, const Tensor3T<T>& dout,
                               std::vector<T>& dfilters, std::vector<T>& dbias,
                               Tensor3T<T>& din) {
  const int c = in.channels;
  dfilters.assign(filters.size(), T(0));
  dbias.assign(c, T(0));
  din = Tensor3T<T>(in.shape());
  for (int oy = 0; oy < dout.height; ++oy) {
    for (int ox = 0; ox < dout.width; ++ox) {
      const T* g = &dout.at(oy, ox, 0);
      for (int j = 0; j < c; ++j) dbias[j] += g[j];
      for (int ky = 0; ky < kh; ++ky) {
        const T* row = &in.at(oy * stride + ky, ox * stride, 0);
        T* drow = &din.at(oy * stride + ky, ox * stride, 0);
        const std::size_t woff = static_cast<std::size_t>(ky) * kw * c;
        for (int kx = 0; kx < kw; ++kx)
          for (int j = 0; j < c; ++j) {
            dfilters[woff + kx * c + j] += row[kx * c + j] * g[j];
            drow[kx * c + j] += filters[woff + kx * c + j] * g[j];
          }
      }
    }
  }
}

template <typename T>
void maxpool_backward(const Tensor3T<T>& in, int kh, int kw, int stride,
                      const Tensor3T<T>& dout, Tensor3T<T>& din) {
  din = Tensor3T<T>(in.shape());
  for (int oy = 0; oy < dout.height; ++oy)
    for (int ox = 0; ox < dout.width; ++ox)
      for (int c = 0; c < in.channels; ++c) {
        int by = oy * stride, bx = ox * stride;
        T best = in.at(by, bx, c);
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T v = in.at(oy * stride + ky, ox * stride + kx, c);
            if (v > best) {  // first maximum wins ties
              best = v;
              by = oy * stride + ky;
              bx = ox * stride + kx;
            }
          }
        din.at(by, bx, c) += dout.at(oy, ox, c);
      }
}

template <typename T>
void dense_backward(const std::vector<T>& x, const std::vector<T>& w,
                    const std::vector<T>& dy, std::vector<T>& dw,
                    std::vector<T>& db, std::vector<T>& dx) {
  const std::size_t n = x.size();
  const std::size_t m = dy.size();
  dw.assign(w.size(), T(0));
  db = dy;
  dx.assign(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T xi = x[i];
    const T* row = &w[i * m];
    T* drow = &dw[i * m];
    T acc = 0;
    for (std::size_t j = 0; j < m; ++j) {
      drow[j] += xi * dy[j];
      acc += row[j] * dy[j];
    }
    dx[i] = acc;
  }
}

template <typename T>
void relu_backward(const Tensor3T<T>& in, const Tensor3T<T>& dout, Tensor3T<T>& din) {
  din = dout;
  for (std::size_t i = 0; i < in.data.size(); ++i)
    if (in.data[i] <= T(0)) din.data[i] = T(0);
}

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::DepthwiseConv2d: return "depthwise_conv2d";
    case LayerKind::PointwiseConv2d: return "pointwise_conv2d";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

inline LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "conv2d") return LayerKind::Conv2d;
  if (name == "depthwise_conv2d") return LayerKind::DepthwiseConv2d;
  if (name == "pointwise_conv2d") return LayerKind::PointwiseConv2d;
  if (name == "maxpool") return LayerKind::MaxPool;
  if (name == "dense") return LayerKind::Dense;
  if (name == "relu") return LayerKind::Relu;
  if (name == "softmax") return LayerKind::Softmax;
  if (name == "flatten") return LayerKind::Flatten;
  throw InvalidArgument("unknown layer kind: " + name);
}

}  // namespace quickloc
