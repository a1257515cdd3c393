#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "rast/tensor.hpp"

namespace rast {

using Rng = std::mt19937_64;

// Elementwise binary ops. Shapes must match, or one operand's shape must be a
// suffix of the other's (broadcast over leading batch axes only).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);

/// a[..., m, k] x b[..., k, n]. Batch extents must be equal, or one side is a
/// plain matrix shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., in] * weight[in, out] + bias[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, int axis);

/// Softmax over the last axis where `keep[i] == 0` positions are excluded and
/// receive exactly zero weight. `keep` has one flag per element of x. A slice
/// with nothing kept yields all zeros.
Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& keep);

/// Normalizes over the last axis with biased variance. gamma/beta may be
/// undefined, in which case no affine transform is applied.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct Conv2dOptions {
    std::size_t stride_h = 1, stride_w = 1;
    std::size_t pad_h = 0, pad_w = 0;
    std::size_t dilation_h = 1, dilation_w = 1;
};

/// Cross-correlation. x[B, C_in, H, W], kernel[C_out, C_in, KH, KW], bias[C_out] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& options = {});

/// x[B, C_in, L], kernel[C_out, C_in, K].
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0, std::size_t dilation = 1);

/// Inverted dropout: kept units are scaled by 1/(1-p) in training; identity otherwise.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x, int axis_a, int axis_b);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);

} // namespace rast
