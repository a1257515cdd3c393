#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "rast/config.hpp"
#include "rast/nn.hpp"
#include "rast/tensor.hpp"

namespace rast {

enum class BackboneKind { Mlp, External };

/// Universal backbone contract: [B, N, in_width] -> [B, N, out_width].
/// A frozen backbone keeps its parameters out of gradient updates.
class BackboneHandle {
public:
    using Function = std::function<Tensor(const Tensor&, const ForwardContext&)>;

    BackboneHandle() = default;

    /// Linear -> ReLU -> dropout -> Linear -> ReLU -> dropout -> Linear, hidden width mlp_ratio * in.
    static BackboneHandle mlp(std::size_t in_width, std::size_t out_width, double mlp_ratio, double dropout, Rng& rng);
    /// Caller-supplied network. `params` lists its tensors for checkpointing and optimization.
    static BackboneHandle external(std::size_t in_width, std::size_t out_width, Function fn, ParameterList params = {});

    Tensor operator()(const Tensor& h_f, const ForwardContext& ctx) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    void set_trainable(bool trainable);
    bool trainable() const { return trainable_; }
    BackboneKind kind() const { return kind_; }
    std::size_t in_width() const { return in_width_; }
    std::size_t out_width() const { return out_width_; }

    Linear l1, l2, l3; // MLP only

private:
    BackboneKind kind_ = BackboneKind::Mlp;
    std::size_t in_width_ = 0;
    std::size_t out_width_ = 0;
    double dropout_ = 0.0;
    bool trainable_ = true;
    Function fn_;
    ParameterList external_params_;
};

/// Conv branch of the residual enhancement: H_f W1 + b1 -> 1x1 conv -> ReLU
/// -> W2 + b2 -> 1x1 conv, all at width D_r. The 1x1 convolutions slide over
/// the node axis.
class ResidualEnhancer {
public:
    ResidualEnhancer() = default;
    ResidualEnhancer(std::size_t in_width, std::size_t branch_width, Rng& rng);

    Tensor branch(const Tensor& h_f) const;
    /// Z = concat(backbone_out, branch(h_f)) along features.
    Tensor operator()(const Tensor& h_f, const Tensor& backbone_out) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    Linear w1;
    PointwiseConv conv1;
    Linear w2;
    PointwiseConv conv2;
};

/// LayerNorm(Z) + FFN(Z) at width D_q + D_r, then a per-node linear map to
/// H * D_out reshaped to [B, H, N, D_out].
class OutputHead {
public:
    OutputHead() = default;
    OutputHead(const ModelConfig& cfg, Rng& rng);

    Tensor operator()(const Tensor& z, const ForwardContext& ctx) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    LayerNorm norm;
    FeedForward ffn;
    Linear proj;
    std::size_t horizon = 0;
    std::size_t out_dim = 0;
};

} // namespace rast
