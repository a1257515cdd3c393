#include "rast/retriever.hpp"

#include <cmath>

#include "rast/errors.hpp"
#include "rast/ops.hpp"

namespace rast {

Tensor RetrievalResult::values() const { return Tensor::from({rows, k, dim}, vectors); }

std::vector<SearchHit> RetrievalResult::hits(std::size_t row) const {
    std::vector<SearchHit> out;
    for (std::size_t j = 0; j < k; ++j) {
        const auto slot = row * k + j;
        if (!mask[slot]) continue;
        out.push_back({static_cast<std::uint32_t>(ids[slot]), similarities[slot], momenta[slot]});
    }
    return out;
}

RetrievalResult retrieve(const Tensor& queries, const MemoryBank& bank, std::size_t k) {
    if (k == 0) throw ContractError("retrieve: k must be at least 1");
    const auto d = bank.dim();
    if (queries.dim() < 2 || queries.size(-1) != d) {
        throw ShapeError("retrieve: query rows " + shape_str(queries.shape()) + " do not match bank dimension " +
                         std::to_string(d));
    }
    RetrievalResult r;
    r.tag = bank.tag();
    r.rows = queries.numel() / d;
    r.k = k;
    r.dim = d;
    r.vectors.assign(r.rows * k * d, 0.0);
    r.similarities.assign(r.rows * k, 0.0);
    r.momenta.assign(r.rows * k, 0.0);
    r.ids.assign(r.rows * k, -1);
    r.mask.assign(r.rows * k, 0);
    r.query_only = bank.empty();
    if (r.query_only) return r;

    auto q = queries.data();
    for (std::size_t row = 0; row < r.rows; ++row) {
        const auto hits = bank.search(q.subspan(row * d, d), k);
        for (std::size_t j = 0; j < hits.size(); ++j) {
            const auto slot = row * k + j;
            auto v = bank.vector(hits[j].id);
            std::copy(v.begin(), v.end(), r.vectors.begin() + static_cast<long>(slot * d));
            r.similarities[slot] = hits[j].similarity;
            r.momenta[slot] = hits[j].momentum;
            r.ids[slot] = hits[j].id;
            r.mask[slot] = 1;
        }
    }
    return r;
}

void apply_retrieval_feedback(MemoryBank& bank, const RetrievalResult& result, const Tensor& queries) {
    if (result.query_only) {
        bank.record_queries(queries.data());
        return;
    }
    for (std::size_t row = 0; row < result.rows; ++row) {
        auto hits = result.hits(row);
        if (!hits.empty()) bank.update_momentum(hits);
    }
    bank.record_queries(queries.data());
}

MultiHeadAttention::MultiHeadAttention(std::size_t query_in, std::size_t key_in, std::size_t value_in,
                                       std::size_t width, std::size_t heads, double attn_dropout, Rng& rng)
    : wq(query_in, width, rng), wk(key_in, width, rng), wv(value_in, width, rng), wo(width, width, rng),
      heads_(heads), attn_dropout_(attn_dropout) {
    if (heads == 0 || width % heads != 0) {
        throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide width (" +
                          std::to_string(width) + ")");
    }
}

AttentionOutput MultiHeadAttention::operator()(const Tensor& q, const Tensor& k, const Tensor& v,
                                               const std::vector<std::uint8_t>& keep,
                                               const ForwardContext& ctx) const {
    if (q.dim() != 3 || k.dim() != 3 || v.dim() != 3) throw ShapeError("attention expects rank-3 inputs");
    const auto r = q.size(0), tq = q.size(1), s = k.size(1);
    if (k.size(0) != r || v.size(0) != r || v.size(1) != s) {
        throw ShapeError("attention inputs disagree: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
    }
    if (!keep.empty() && keep.size() != r * s) throw ShapeError("attention mask needs one flag per key slot");
    const auto width = wo.out_features();
    const auto dk = width / heads_;

    auto split = [&](const Tensor& x, std::size_t len) {
        return permute(reshape(x, {r, len, heads_, dk}), {0, 2, 1, 3}); // [R, h, len, dk]
    };
    auto qh = split(wq(q), tq);
    auto kh = split(wk(k), s);
    auto vh = split(wv(v), s);
    auto scores = scale(matmul(qh, transpose(kh, 2, 3)), 1.0 / std::sqrt(static_cast<double>(dk)));

    Tensor weights;
    if (keep.empty()) {
        weights = softmax(scores, -1);
    } else {
        std::vector<std::uint8_t> flags(r * heads_ * tq * s);
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t h = 0; h < heads_; ++h)
                for (std::size_t i = 0; i < tq; ++i)
                    for (std::size_t j = 0; j < s; ++j) flags[((a * heads_ + h) * tq + i) * s + j] = keep[a * s + j];
        weights = masked_softmax(scores, flags);
    }
    auto attn = ctx.training && attn_dropout_ > 0.0 ? dropout(weights, attn_dropout_, true, ctx.generator()) : weights;
    auto mixed = permute(matmul(attn, vh), {0, 2, 1, 3}); // [R, Tq, h, dk]
    return {wo(reshape(mixed, {r, tq, width})), weights};
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
    wq.collect(prefix + ".q", out);
    wk.collect(prefix + ".k", out);
    wv.collect(prefix + ".v", out);
    wo.collect(prefix + ".out", out);
}

CrossFusion::CrossFusion(const ModelConfig& cfg, Rng& rng)
    : temporal_attn(cfg.query_dim, cfg.retrieval_dim, cfg.retrieval_dim, cfg.retrieval_dim, cfg.n_heads,
                    cfg.attn_dropout, rng),
      spatial_attn(cfg.query_dim, cfg.retrieval_dim, cfg.retrieval_dim, cfg.retrieval_dim, cfg.n_heads,
                   cfg.attn_dropout, rng),
      fusion_attn(cfg.query_dim, cfg.retrieval_dim, cfg.retrieval_dim, cfg.retrieval_dim, cfg.n_heads,
                  cfg.attn_dropout, rng) {}

FusedContext CrossFusion::query_only(const Tensor& q_st) const {
    const auto b = q_st.size(0), n = q_st.size(1), d_r = fusion_attn.width();
    auto zero = Tensor::zeros({b, n, d_r});
    return {zero, zero, zero, concat({q_st, zero}, 2)};
}

FusedContext CrossFusion::operator()(const Tensor& q_st, const RetrievalResult& spatial,
                                     const RetrievalResult& temporal, const ForwardContext& ctx) const {
    if (q_st.dim() != 3) throw ShapeError("cross fusion expects Q_st [B, N, D_q], got " + shape_str(q_st.shape()));
    if (spatial.query_only || temporal.query_only) return query_only(q_st);
    const auto b = q_st.size(0), n = q_st.size(1), rows = b * n;
    if (spatial.rows != rows || temporal.rows != rows) {
        throw ShapeError("retrievals cover " + std::to_string(spatial.rows) + "/" + std::to_string(temporal.rows) +
                         " rows, query has " + std::to_string(rows));
    }
    const auto d_r = fusion_attn.width();
    auto q_rows = reshape(q_st, {rows, 1, q_st.size(2)});
    auto e_t = temporal.values();
    auto e_s = spatial.values();
    auto r_t = reshape(temporal_attn(q_rows, e_t, e_t, temporal.mask, ctx).output, {b, n, d_r});
    auto r_s = reshape(spatial_attn(q_rows, e_s, e_s, spatial.mask, ctx).output, {b, n, d_r});
    auto r_f = fusion_attn(q_st, r_s, r_t, {}, ctx).output;
    return {r_s, r_t, r_f, concat({q_st, r_f}, 2)};
}

void CrossFusion::collect(const std::string& prefix, ParameterList& out) const {
    temporal_attn.collect(prefix + ".temporal", out);
    spatial_attn.collect(prefix + ".spatial", out);
    fusion_attn.collect(prefix + ".fusion", out);
}

} // namespace rast
