#pragma once

#include "rlab/core.hpp"

#include <cmath>
#include <span>

namespace rlab::layers {

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> silu(const Matrix<Scalar>& z) {
  return z.array() / (Scalar(1) + (-z.array()).exp());
}

/// d silu(z) / dz elementwise, multiplied into `grad`.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> silu_backward(const Matrix<Scalar>& z, const Matrix<Scalar>& grad) {
  const auto sig = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).eval();
  return grad.array() * (sig * (Scalar(1) + z.array() * (Scalar(1) - sig)));
}

/// Sinusoidal embedding of integer timesteps: [sin(t w_i), cos(t w_i)], w_i = 10000^(-i/half).
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> timestep_embedding(std::span<const int> t, int dim) {
  const int half = dim / 2;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(dim, static_cast<Index>(t.size()));
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double w = std::exp(-std::log(10000.0) * i / half);
      out(i, static_cast<Index>(n)) = static_cast<Scalar>(std::sin(t[n] * w));
      out(half + i, static_cast<Index>(n)) = static_cast<Scalar>(std::cos(t[n] * w));
    }
  }
  return out;
}

/// 3x3 same-padding convolution helpers on "pixel-major" activations:
/// a C x (H*W*N) matrix whose column n*H*W + y*W + x holds every channel of
/// pixel (y, x) in sample n. A column-major H*W x N image batch is already in
/// this layout with C = 1.
struct ConvGeometry {
  Index side = 0;
  [[nodiscard]] Index pixels() const { return side * side; }
};

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> im2col(const Matrix<Scalar>& h, ConvGeometry g) {
  const Index c_in = h.rows();
  const Index cols = h.cols();
  const Index hw = g.pixels();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(c_in * 9, cols);
  for (Index col = 0; col < cols; ++col) {
    const Index n = col / hw;
    const Index p = col % hw;
    const Index y = p / g.side, x = p % g.side;
    for (int k = 0; k < 9; ++k) {
      const Index yy = y + k / 3 - 1, xx = x + k % 3 - 1;
      if (yy < 0 || yy >= g.side || xx < 0 || xx >= g.side) continue;
      const Index src = n * hw + yy * g.side + xx;
      for (Index c = 0; c < c_in; ++c) out(c * 9 + k, col) = h(c, src);
    }
  }
  return out;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> col2im(const Matrix<Scalar>& cols_grad, Index c_in, ConvGeometry g) {
  const Index cols = cols_grad.cols();
  const Index hw = g.pixels();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(c_in, cols);
  for (Index col = 0; col < cols; ++col) {
    const Index n = col / hw;
    const Index p = col % hw;
    const Index y = p / g.side, x = p % g.side;
    for (int k = 0; k < 9; ++k) {
      const Index yy = y + k / 3 - 1, xx = x + k % 3 - 1;
      if (yy < 0 || yy >= g.side || xx < 0 || xx >= g.side) continue;
      const Index dst = n * hw + yy * g.side + xx;
      for (Index c = 0; c < c_in; ++c) out(c, dst) += cols_grad(c * 9 + k, col);
    }
  }
  return out;
}

/// Adds per-sample channel biases (C x N) to every pixel of that sample.
template <typename Scalar>
void add_per_sample(Matrix<Scalar>& h, const Matrix<Scalar>& bias, Index hw) {
  for (Index col = 0; col < h.cols(); ++col) h.col(col) += bias.col(col / hw);
}

/// Sums pixel columns per sample: C x (HW*N) -> C x N.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> sum_per_sample(const Matrix<Scalar>& h, Index hw) {
  const Index n = h.cols() / hw;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(h.rows(), n);
  for (Index col = 0; col < h.cols(); ++col) out.col(col / hw) += h.col(col);
  return out;
}

}  // namespace rlab::layers
