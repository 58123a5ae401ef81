#pragma once

#include "tensor.hpp"

#include <cmath>
#include <string>

namespace deeperaser {

/// Stride-1 convolution with symmetric zero padding, so spatial size is preserved.
/// Weight layout is out x (in * k * k) with column index (c * k + ky) * k + kx.
template <class T>
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  Matrix<T> weight;
  Vector<T> bias;

  Conv2d() = default;
  Conv2d(int in, int out, int k)
      : in_channels(in), out_channels(out), kernel(k), weight(Matrix<T>::Zero(out, in * k * k)),
        bias(Vector<T>::Zero(out)) {}

  std::size_t parameter_count() const { return static_cast<std::size_t>(weight.size() + bias.size()); }

  void set_zero() {
    weight.setZero();
    bias.setZero();
  }
};

namespace detail {

template <class T>
Matrix<T> im2col(const FeatureMap<T>& in, int k) {
  const int pad = k / 2;
  const int h = in.height, w = in.width;
  Matrix<T> cols = Matrix<T>::Zero(static_cast<Eigen::Index>(in.channels()) * k * k, h * w);
  for (int c = 0; c < in.channels(); ++c) {
    const T* src = in.data.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.row((c * k + ky) * k + kx).data();
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          const T* s = src + (y + dy) * w + dx;
          T* d = dst + y * w;
          for (int x = x0; x < x1; ++x) d[x] = s[x];
        }
      }
  }
  return cols;
}

template <class T>
void col2im_add(const Matrix<T>& cols, int k, FeatureMap<T>& out) {
  const int pad = k / 2;
  const int h = out.height, w = out.width;
  for (int c = 0; c < out.channels(); ++c) {
    T* dst = out.data.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.row((c * k + ky) * k + kx).data();
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          T* d = dst + (y + dy) * w + dx;
          const T* s = src + y * w;
          for (int x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
  }
}

}  // namespace detail

template <class T>
FeatureMap<T> conv_forward(const Conv2d<T>& conv, const FeatureMap<T>& in) {
  if (in.channels() != conv.in_channels) {
    throw std::invalid_argument("conv: expected " + std::to_string(conv.in_channels) + " input channels, got " +
                                std::to_string(in.channels()));
  }
  FeatureMap<T> out(in.height, in.width, Matrix<T>());
  if (conv.kernel == 1) {
    out.data.noalias() = conv.weight * in.data;
  } else {
    out.data.noalias() = conv.weight * detail::im2col(in, conv.kernel);
  }
  out.data.colwise() += conv.bias;
  return out;
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
template <class T>
FeatureMap<T> conv_backward(const Conv2d<T>& conv, const FeatureMap<T>& in, const FeatureMap<T>& grad_out,
                            Conv2d<T>& grad) {
  FeatureMap<T> grad_in(conv.in_channels, in.height, in.width);
  grad.bias += grad_out.data.rowwise().sum();
  if (conv.kernel == 1) {
    grad.weight.noalias() += grad_out.data * in.data.transpose();
    grad_in.data.noalias() = conv.weight.transpose() * grad_out.data;
  } else {
    const Matrix<T> cols = detail::im2col(in, conv.kernel);
    grad.weight.noalias() += grad_out.data * cols.transpose();
    const Matrix<T> grad_cols = conv.weight.transpose() * grad_out.data;
    detail::col2im_add(grad_cols, conv.kernel, grad_in);
  }
  return grad_in;
}

// Elementwise activations. Backward helpers take the forward OUTPUT where that is enough.

template <class T>
FeatureMap<T> relu(FeatureMap<T> m) {
  m.data = m.data.cwiseMax(T(0));
  return m;
}

template <class T>
FeatureMap<T> relu_backward(const FeatureMap<T>& out, FeatureMap<T> grad) {
  grad.data = (out.data.array() > T(0)).select(grad.data, T(0));
  return grad;
}

template <class T>
FeatureMap<T> leaky_relu(FeatureMap<T> m, T slope) {
  m.data = (m.data.array() >= T(0)).select(m.data, m.data * slope);
  return m;
}

template <class T>
FeatureMap<T> leaky_relu_backward(const FeatureMap<T>& pre, FeatureMap<T> grad, T slope) {
  grad.data = (pre.data.array() >= T(0)).select(grad.data, grad.data * slope);
  return grad;
}

template <class T>
FeatureMap<T> sigmoid(FeatureMap<T> m) {
  m.data = m.data.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
  return m;
}

template <class T>
FeatureMap<T> sigmoid_backward(const FeatureMap<T>& out, FeatureMap<T> grad) {
  grad.data.array() *= out.data.array() * (T(1) - out.data.array());
  return grad;
}

template <class T>
FeatureMap<T> tanh_map(FeatureMap<T> m) {
  m.data = m.data.array().tanh().matrix();
  return m;
}

template <class T>
FeatureMap<T> tanh_backward(const FeatureMap<T>& out, FeatureMap<T> grad) {
  grad.data.array() *= T(1) - out.data.array().square();
  return grad;
}

}  // namespace deeperaser
