#pragma once

#include <optional>

#include "rast/config.hpp"
#include "rast/encoders.hpp"
#include "rast/predictor.hpp"
#include "rast/retriever.hpp"
#include "rast/store.hpp"

namespace rast {

struct ModelOutput {
    Tensor prediction; // [B, H, N, D_out]
    QueryBatch query;
    FusedContext fused;
    std::optional<RetrievalResult> spatial;
    std::optional<RetrievalResult> temporal;
};

/// Encoders -> query generator -> retrieval -> cross fusion -> backbone +
/// residual branch -> output head. `output_type` selects the ablation path.
class RastModel {
public:
    RastModel(const ModelConfig& cfg, GraphSpec graph, Rng& rng);

    const ModelConfig& config() const { return cfg_; }
    const GraphSpec& graph() const { return graph_; }

    /// Searches `store` with the rows of E_sp and E_tp. A null store, or the
    /// query_only mode, skips retrieval.
    ModelOutput forward(const Tensor& x, const RetrievalStore* store, const ForwardContext& ctx) const;

    /// Same pipeline with retrievals supplied by the caller (held fixed, e.g.
    /// for gradient checks). Null retrievals mean the query-only path.
    ModelOutput forward_with(const Tensor& x, const RetrievalResult* spatial, const RetrievalResult* temporal,
                             const ForwardContext& ctx) const;

    QueryBatch encode(const Tensor& x, const ForwardContext& ctx) const;

    ParameterList parameters() const;

    /// Replaces the backbone. The handle must map D_q + D_r to D_q.
    void set_backbone(BackboneHandle backbone);
    BackboneHandle& backbone() { return backbone_; }

    TemporalEncoder temporal;
    SpatialEncoder spatial;
    QueryGenerator query;
    CrossFusion fusion;
    ResidualEnhancer enhancer;
    OutputHead head;

private:
    void predict(ModelOutput& out, const ForwardContext& ctx) const;

    ModelConfig cfg_;
    GraphSpec graph_;
    Tensor propagation_;
    BackboneHandle backbone_;
};

} // namespace rast
