#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rast/ops.hpp"
#include "rast/tensor.hpp"

namespace rast {

/// Mode flags threaded through every forward pass.
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;

    Rng& generator() const;
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

using ParameterList = std::vector<NamedParameter>;

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// He/Kaiming normal (fan-in mode, ReLU gain) for a kernel of the given shape.
Tensor kaiming_normal(const Shape& kernel_shape, Rng& rng);

struct Linear {
    Tensor weight; // [in, out]
    Tensor bias;   // [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_features() const { return weight.size(0); }
    std::size_t out_features() const { return weight.size(1); }
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    void collect(const std::string& prefix, ParameterList& out) const;
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t width, double eps = 1e-5);

    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
    void collect(const std::string& prefix, ParameterList& out) const;
};

/// Linear -> ReLU -> dropout -> Linear.
struct FeedForward {
    Linear up;
    Linear down;
    double dropout = 0.0;

    FeedForward() = default;
    FeedForward(std::size_t width, std::size_t hidden, double dropout, Rng& rng);

    Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
    void collect(const std::string& prefix, ParameterList& out) const;
};

/// Pointwise convolution over the node axis: [B, N, C_in] -> [B, N, C_out]
/// computed as a 1x1 Conv2D on the [B, C, N, 1] layout.
struct PointwiseConv {
    Tensor kernel; // [C_out, C_in, 1, 1]
    Tensor bias;   // [C_out]

    PointwiseConv() = default;
    PointwiseConv(std::size_t in, std::size_t out, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParameterList& out) const;
};

void set_trainable(ParameterList& params, bool trainable);

} // namespace rast
