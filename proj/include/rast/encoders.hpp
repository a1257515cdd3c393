#pragma once

#include <cstddef>
#include <tuple>
#include <vector>

#include "rast/config.hpp"
#include "rast/nn.hpp"
#include "rast/tensor.hpp"

namespace rast {

/// Sensor graph. The adjacency is dense N x N with nonnegative weights.
/// Self-loop convention: the propagation matrix uses A with its diagonal set
/// to 1 (a self-loop is added once, existing self-weights are overwritten),
/// then normalizes each row to sum 1.
class GraphSpec {
public:
    GraphSpec() = default;

    static GraphSpec isolated(std::size_t num_nodes);
    static GraphSpec from_dense(std::size_t num_nodes, std::vector<double> adjacency);
    /// Edges are (src, dst, weight). Repeated edges accumulate.
    static GraphSpec from_edges(std::size_t num_nodes,
                                const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges);

    std::size_t num_nodes() const { return n_; }
    const std::vector<double>& adjacency() const { return adjacency_; }
    double weight(std::size_t src, std::size_t dst) const { return adjacency_[src * n_ + dst]; }

    /// Row-normalized (A + I) as a constant [N, N] tensor.
    Tensor propagation() const;

    /// Relabels nodes: new node i is old node perm[i].
    GraphSpec permuted(const std::vector<std::size_t>& perm) const;

private:
    std::size_t n_ = 0;
    std::vector<double> adjacency_;
};

struct QueryBatch {
    Tensor e_tp; // [B, N, D_tp]
    Tensor e_sp; // [B, N, D_sp]
    Tensor q_st; // [B, N, D_q]
};

/// Temporal encoder: a conv kernel spanning the whole (L, D_in) plane of each
/// node produces D_tp channels, collapsing time. The dilated conv1d variant
/// slides over time with channels = D_in and averages the result over time.
class TemporalEncoder {
public:
    TemporalEncoder() = default;
    TemporalEncoder(const ModelConfig& cfg, Rng& rng);

    /// x: [B, L, N, D_in] -> [B, N, D_tp]
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    Tensor kernel; // conv2d: [D_tp, 1, L, D_in]; conv1d: [D_tp, D_in, K]
    Tensor bias;   // [D_tp]
    LayerNorm norm;
    TemporalConvKind kind = TemporalConvKind::Conv2d;
    EmbeddingNorm norm_mode = EmbeddingNorm::LayerNorm;
    std::size_t dilation = 1;
};

/// Spatial encoder: one propagation hop over the graph applied to the
/// time-flattened features of each node, then a linear map to D_sp.
class SpatialEncoder {
public:
    SpatialEncoder() = default;
    SpatialEncoder(const ModelConfig& cfg, Rng& rng);

    /// x: [B, L, N, D_in], propagation: [N, N] -> [B, N, D_sp]
    Tensor operator()(const Tensor& x, const Tensor& propagation) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    Linear proj; // [L * D_in, D_sp]
    LayerNorm norm;
    EmbeddingNorm norm_mode = EmbeddingNorm::LayerNorm;
};

/// Linear_Q over concat[E_sp; E_tp] followed by residual LayerNorm(E + FFN(E)) layers.
class QueryGenerator {
public:
    QueryGenerator() = default;
    QueryGenerator(const ModelConfig& cfg, Rng& rng);

    Tensor operator()(const Tensor& e_sp, const Tensor& e_tp, const ForwardContext& ctx) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    Linear input;
    std::vector<FeedForward> ffn;
    std::vector<LayerNorm> norms;
};

/// Time-flattens x[B, L, N, D] into [B, N, L * D] with features ordered (t, d).
Tensor flatten_history(const Tensor& x);

} // namespace rast
