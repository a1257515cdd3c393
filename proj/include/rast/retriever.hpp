#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rast/config.hpp"
#include "rast/nn.hpp"
#include "rast/store.hpp"
#include "rast/tensor.hpp"

namespace rast {

/// Top-k patterns for every (batch, node) query row of one bank. Rows with
/// fewer than k hits are padded; padded slots have mask 0 and id -1.
struct RetrievalResult {
    BankTag tag = BankTag::Spatial;
    std::size_t rows = 0;
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> vectors;      // rows x k x dim
    std::vector<double> similarities; // rows x k
    std::vector<double> momenta;      // rows x k
    std::vector<std::int64_t> ids;    // rows x k
    std::vector<std::uint8_t> mask;   // rows x k
    bool query_only = false;          // bank was empty

    /// Retrieved vectors as a constant [rows, k, dim] tensor.
    Tensor values() const;
    std::vector<SearchHit> hits(std::size_t row) const;
};

/// Searches `bank` with every row of `queries` ([B, N, D] or [R, D]).
RetrievalResult retrieve(const Tensor& queries, const MemoryBank& bank, std::size_t k);

/// Training-time side effects of a retrieval: momentum shares for every row
/// and the query reservoir used by pruning.
void apply_retrieval_feedback(MemoryBank& bank, const RetrievalResult& result, const Tensor& queries);

struct AttentionOutput {
    Tensor output;  // [R, Tq, D]
    Tensor weights; // [R, heads, Tq, S]
};

/// Multi-head scaled dot-product attention with separate Q/K/V/output projections.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(std::size_t query_in, std::size_t key_in, std::size_t value_in, std::size_t width,
                       std::size_t heads, double attn_dropout, Rng& rng);

    /// q [R, Tq, query_in], k [R, S, key_in], v [R, S, value_in]. `keep` has
    /// R*S flags (empty means keep everything).
    AttentionOutput operator()(const Tensor& q, const Tensor& k, const Tensor& v, const std::vector<std::uint8_t>& keep,
                               const ForwardContext& ctx) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    std::size_t heads() const { return heads_; }
    std::size_t width() const { return wo.out_features(); }

    Linear wq, wk, wv, wo;

private:
    std::size_t heads_ = 1;
    double attn_dropout_ = 0.0;
};

struct FusedContext {
    Tensor r_s; // [B, N, D_r]
    Tensor r_t; // [B, N, D_r]
    Tensor r_f; // [B, N, D_r]
    Tensor h_f; // [B, N, D_q + D_r]
};

/// R_t = Attn(Q, E_t, E_t), R_s = Attn(Q, E_s, E_s), R_f = Attn(Q, R_s, R_t),
/// H_f = concat[Q; R_f]. The first two attend over the k retrieved slots of
/// each row; the third attends across the nodes of each batch item.
class CrossFusion {
public:
    CrossFusion() = default;
    CrossFusion(const ModelConfig& cfg, Rng& rng);

    FusedContext operator()(const Tensor& q_st, const RetrievalResult& spatial, const RetrievalResult& temporal,
                            const ForwardContext& ctx) const;
    /// Retrieval disabled: R_s = R_t = R_f = 0.
    FusedContext query_only(const Tensor& q_st) const;
    void collect(const std::string& prefix, ParameterList& out) const;

    MultiHeadAttention temporal_attn;
    MultiHeadAttention spatial_attn;
    MultiHeadAttention fusion_attn;
};

} // namespace rast
