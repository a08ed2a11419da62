#pragma once

// The closed operator set of the tensor core. All operators are
// differentiable with respect to every Tensor argument.
//
// Elementwise binary operators accept a second operand whose dimensions are
// each either 1 or equal to the first operand's (one-sided broadcast, enough
// for channel gates, spatial gates and per-channel biases).

#include <span>

#include "ossdet/tensor/tensor.hpp"

namespace ossdet::tensor {

/// 2-D cross-correlation. weight (cout, cin, k, k) with odd k; bias
/// (1, cout, 1, 1) or undefined. Output spatial size floor((H + 2p - k)/s) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad);
/// Same-style padding (k - 1) / 2.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1);

enum class Activation { sigmoid, tanh, relu };
Tensor pointwise(const Tensor& x, Activation f);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

enum class PoolKind {
  gap,           // spatial mean -> (n, c, 1, 1)
  avg3x3s2,      // 3x3 window, stride 2, pad 1, divides by the valid-cell count
  channel_mean,  // mean over channels -> (n, 1, h, w)
};
Tensor pool(const Tensor& x, PoolKind kind);

/// Nearest-neighbour 2x: each cell becomes a 2x2 block.
Tensor upsample2x(const Tensor& x);

/// Batched matrix product on (n, 1, rows, cols) views. At most one operand may
/// be transposed.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// Softmax along axis 1 (c), 2 (h) or 3 (w).
Tensor softmax(const Tensor& x, int axis);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

/// Fully connected map on (n, cin, 1, 1); weight (cout, cin, 1, 1), bias (1, cout, 1, 1).
Tensor fc(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

/// Sum of all entries -> (1, 1, 1, 1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// x / (||x||_F + eps), norm taken per batch item over (c, h, w).
Tensor frobenius_normalize(const Tensor& x, double eps);

}  // namespace ossdet::tensor
