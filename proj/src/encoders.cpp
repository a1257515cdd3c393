#include "rast/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "rast/errors.hpp"
#include "rast/ops.hpp"

namespace rast {

GraphSpec GraphSpec::isolated(std::size_t num_nodes) {
    return from_dense(num_nodes, std::vector<double>(num_nodes * num_nodes, 0.0));
}

GraphSpec GraphSpec::from_dense(std::size_t num_nodes, std::vector<double> adjacency) {
    if (num_nodes == 0) throw ShapeError("graph needs at least one node");
    if (adjacency.size() != num_nodes * num_nodes) {
        throw ShapeError("adjacency has " + std::to_string(adjacency.size()) + " values, expected " +
                         std::to_string(num_nodes) + "x" + std::to_string(num_nodes));
    }
    for (std::size_t i = 0; i < adjacency.size(); ++i) {
        if (!std::isfinite(adjacency[i]) || adjacency[i] < 0.0) {
            throw DataError("adjacency weight at (" + std::to_string(i / num_nodes) + "," +
                            std::to_string(i % num_nodes) + ") is negative or non-finite");
        }
    }
    GraphSpec g;
    g.n_ = num_nodes;
    g.adjacency_ = std::move(adjacency);
    return g;
}

GraphSpec GraphSpec::from_edges(std::size_t num_nodes,
                                const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges) {
    std::vector<double> a(num_nodes * num_nodes, 0.0);
    for (const auto& [src, dst, w] : edges) {
        if (src >= num_nodes || dst >= num_nodes) {
            throw DataError("edge (" + std::to_string(src) + "," + std::to_string(dst) + ") outside " +
                            std::to_string(num_nodes) + " nodes");
        }
        a[src * num_nodes + dst] += w;
    }
    return from_dense(num_nodes, std::move(a));
}

Tensor GraphSpec::propagation() const {
    std::vector<double> p(adjacency_);
    for (std::size_t i = 0; i < n_; ++i) {
        p[i * n_ + i] = 1.0;
        double row = 0.0;
        for (std::size_t j = 0; j < n_; ++j) row += p[i * n_ + j];
        for (std::size_t j = 0; j < n_; ++j) p[i * n_ + j] /= row;
    }
    return Tensor::from({n_, n_}, std::move(p));
}

GraphSpec GraphSpec::permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != n_) throw ShapeError("permutation length does not match node count");
    std::vector<double> a(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) a[i * n_ + j] = adjacency_[perm[i] * n_ + perm[j]];
    }
    return from_dense(n_, std::move(a));
}

Tensor flatten_history(const Tensor& x) {
    if (x.dim() != 4) throw ShapeError("expected input window [B, L, N, D], got " + shape_str(x.shape()));
    const auto b = x.size(0), l = x.size(1), n = x.size(2), d = x.size(3);
    return reshape(permute(x, {0, 2, 1, 3}), {b, n, l * d});
}

namespace {

Tensor apply_norm(const Tensor& x, const LayerNorm& norm, EmbeddingNorm mode) {
    return mode == EmbeddingNorm::LayerNorm ? norm(x) : x;
}

} // namespace

TemporalEncoder::TemporalEncoder(const ModelConfig& cfg, Rng& rng)
    : norm(cfg.embedding_dim()), kind(cfg.temporal_conv), norm_mode(cfg.embedding_norm) {
    const auto d = cfg.embedding_dim();
    if (kind == TemporalConvKind::Conv2d) {
        kernel = kaiming_normal({d, 1, cfg.input_len, cfg.input_dim}, rng);
    } else {
        kernel = kaiming_normal({d, cfg.input_dim, cfg.conv1d_kernel}, rng);
        dilation = cfg.conv1d_dilation;
    }
    bias = Tensor::zeros({d}, true);
}

Tensor TemporalEncoder::operator()(const Tensor& x) const {
    if (x.dim() != 4) throw ShapeError("temporal encoder expects [B, L, N, D_in], got " + shape_str(x.shape()));
    const auto b = x.size(0), l = x.size(1), n = x.size(2), d_in = x.size(3);
    const auto d_out = kernel.size(0);
    Tensor out;
    if (kind == TemporalConvKind::Conv2d) {
        if (l != kernel.size(2) || d_in != kernel.size(3)) {
            throw ShapeError("temporal kernel spans " + shape_str({kernel.size(2), kernel.size(3)}) +
                             " but window is " + shape_str({l, d_in}));
        }
        auto planes = reshape(permute(x, {0, 2, 1, 3}), {b * n, 1, l, d_in});
        out = reshape(conv2d(planes, kernel, bias), {b, n, d_out});
    } else {
        const auto extent = dilation * (kernel.size(2) - 1) + 1;
        if (l < extent) {
            throw ShapeError("window length " + std::to_string(l) + " shorter than dilated kernel extent " +
                             std::to_string(extent));
        }
        auto series = reshape(permute(x, {0, 2, 3, 1}), {b * n, d_in, l});
        auto y = conv1d(series, kernel, bias, 1, 0, dilation);
        out = reshape(mean(y, 2), {b, n, d_out});
    }
    return apply_norm(out, norm, norm_mode);
}

void TemporalEncoder::collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".kernel", kernel, true});
    out.push_back({prefix + ".bias", bias, true});
    if (norm_mode == EmbeddingNorm::LayerNorm) norm.collect(prefix + ".norm", out);
}

SpatialEncoder::SpatialEncoder(const ModelConfig& cfg, Rng& rng)
    : proj(cfg.input_len * cfg.input_dim, cfg.embedding_dim(), rng),
      norm(cfg.embedding_dim()),
      norm_mode(cfg.embedding_norm) {}

Tensor SpatialEncoder::operator()(const Tensor& x, const Tensor& propagation) const {
    auto h = flatten_history(x);
    const auto n = h.size(1);
    if (propagation.dim() != 2 || propagation.size(0) != n || propagation.size(1) != n) {
        throw ShapeError("graph propagation " + shape_str(propagation.shape()) + " does not match " +
                         std::to_string(n) + " nodes");
    }
    if (h.size(2) != proj.in_features()) {
        throw ShapeError("spatial encoder expects " + std::to_string(proj.in_features()) +
                         " flattened features, got " + std::to_string(h.size(2)));
    }
    return apply_norm(proj(matmul(propagation, h)), norm, norm_mode);
}

void SpatialEncoder::collect(const std::string& prefix, ParameterList& out) const {
    proj.collect(prefix + ".proj", out);
    if (norm_mode == EmbeddingNorm::LayerNorm) norm.collect(prefix + ".norm", out);
}

QueryGenerator::QueryGenerator(const ModelConfig& cfg, Rng& rng)
    : input(2 * cfg.embedding_dim(), cfg.query_dim, rng) {
    for (std::size_t i = 0; i < cfg.generator_layers; ++i) {
        ffn.emplace_back(cfg.query_dim, cfg.mlp_hidden(cfg.query_dim), cfg.dropout, rng);
        norms.emplace_back(cfg.query_dim);
    }
}

Tensor QueryGenerator::operator()(const Tensor& e_sp, const Tensor& e_tp, const ForwardContext& ctx) const {
    if (e_sp.dim() != 3 || e_tp.dim() != 3 || e_sp.size(0) != e_tp.size(0) || e_sp.size(1) != e_tp.size(1)) {
        throw ShapeError("query generator inputs disagree: " + shape_str(e_sp.shape()) + " vs " +
                         shape_str(e_tp.shape()));
    }
    if (e_sp.size(2) + e_tp.size(2) != input.in_features()) {
        throw ShapeError("query generator expects concat width " + std::to_string(input.in_features()) + ", got " +
                         std::to_string(e_sp.size(2) + e_tp.size(2)));
    }
    auto e = input(concat({e_sp, e_tp}, 2));
    for (std::size_t i = 0; i < ffn.size(); ++i) e = norms[i](add(e, ffn[i](e, ctx)));
    return e;
}

void QueryGenerator::collect(const std::string& prefix, ParameterList& out) const {
    input.collect(prefix + ".input", out);
    for (std::size_t i = 0; i < ffn.size(); ++i) {
        ffn[i].collect(prefix + ".layers." + std::to_string(i) + ".ffn", out);
        norms[i].collect(prefix + ".layers." + std::to_string(i) + ".norm", out);
    }
}

} // namespace rast
