#include "rast/model.hpp"

#include "rast/errors.hpp"
#include "rast/ops.hpp"

namespace rast {

RastModel::RastModel(const ModelConfig& cfg, GraphSpec graph, Rng& rng)
    : cfg_(cfg), graph_(std::move(graph)) {
    cfg_.validate();
    if (cfg_.num_nodes != 0 && cfg_.num_nodes != graph_.num_nodes()) {
        throw ShapeError("config declares " + std::to_string(cfg_.num_nodes) + " nodes, graph has " +
                         std::to_string(graph_.num_nodes()));
    }
    cfg_.num_nodes = graph_.num_nodes();
    propagation_ = graph_.propagation();
    temporal = TemporalEncoder(cfg_, rng);
    spatial = SpatialEncoder(cfg_, rng);
    query = QueryGenerator(cfg_, rng);
    fusion = CrossFusion(cfg_, rng);
    if (cfg_.output_type == OutputType::NoMlp) {
        // Identity backbone on the query half of H_f.
        const auto d_q = cfg_.query_dim;
        backbone_ = BackboneHandle::external(cfg_.fused_dim(), d_q, [d_q](const Tensor& h, const ForwardContext&) {
            return slice(h, 2, 0, d_q);
        });
    } else {
        backbone_ = BackboneHandle::mlp(cfg_.fused_dim(), cfg_.query_dim, cfg_.mlp_ratio, cfg_.dropout, rng);
    }
    enhancer = ResidualEnhancer(cfg_.fused_dim(), cfg_.retrieval_dim, rng);
    head = OutputHead(cfg_, rng);
}

void RastModel::set_backbone(BackboneHandle backbone) {
    if (backbone.in_width() != cfg_.fused_dim() || backbone.out_width() + cfg_.retrieval_dim != cfg_.fused_dim()) {
        throw ConfigError("backbone maps " + std::to_string(backbone.in_width()) + " -> " +
                          std::to_string(backbone.out_width()) + "; need " + std::to_string(cfg_.fused_dim()) +
                          " -> " + std::to_string(cfg_.query_dim) + " so Z keeps width D_q + D_r");
    }
    backbone_ = std::move(backbone);
}

QueryBatch RastModel::encode(const Tensor& x, const ForwardContext& ctx) const {
    if (x.dim() != 4 || x.size(2) != graph_.num_nodes() || x.size(3) != cfg_.input_dim) {
        throw ShapeError("model expects [B, " + std::to_string(cfg_.input_len) + ", " +
                         std::to_string(graph_.num_nodes()) + ", " + std::to_string(cfg_.input_dim) + "], got " +
                         shape_str(x.shape()));
    }
    QueryBatch qb;
    qb.e_tp = temporal(x);
    qb.e_sp = spatial(x, propagation_);
    qb.q_st = query(qb.e_sp, qb.e_tp, ctx);
    return qb;
}

ModelOutput RastModel::forward(const Tensor& x, const RetrievalStore* store, const ForwardContext& ctx) const {
    ModelOutput out;
    out.query = encode(x, ctx);
    if (store != nullptr && cfg_.output_type != OutputType::QueryOnly) {
        out.spatial = retrieve(out.query.e_sp.detach(), store->spatial, cfg_.top_k);
        out.temporal = retrieve(out.query.e_tp.detach(), store->temporal, cfg_.top_k);
    }
    predict(out, ctx);
    return out;
}

ModelOutput RastModel::forward_with(const Tensor& x, const RetrievalResult* spatial_r,
                                    const RetrievalResult* temporal_r, const ForwardContext& ctx) const {
    ModelOutput out;
    out.query = encode(x, ctx);
    if (spatial_r && temporal_r && cfg_.output_type != OutputType::QueryOnly) {
        out.spatial = *spatial_r;
        out.temporal = *temporal_r;
    }
    predict(out, ctx);
    return out;
}

void RastModel::predict(ModelOutput& out, const ForwardContext& ctx) const {
    if (out.spatial && out.temporal) {
        out.fused = fusion(out.query.q_st, *out.spatial, *out.temporal, ctx);
    } else {
        out.fused = fusion.query_only(out.query.q_st);
    }
    auto h_f = out.fused.h_f;
    if (cfg_.output_type == OutputType::RetrievalOnly) {
        h_f = concat({Tensor::zeros(out.query.q_st.shape()), out.fused.r_f}, 2);
    }
    out.prediction = head(enhancer(h_f, backbone_(h_f, ctx)), ctx);
}

ParameterList RastModel::parameters() const {
    ParameterList p;
    temporal.collect("temporal", p);
    spatial.collect("spatial", p);
    query.collect("query", p);
    fusion.collect("fusion", p);
    backbone_.collect("backbone", p);
    enhancer.collect("enhancer", p);
    head.collect("head", p);
    return p;
}

} // namespace rast
