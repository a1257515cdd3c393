#include "rast/predictor.hpp"

#include "rast/errors.hpp"
#include "rast/ops.hpp"

namespace rast {

BackboneHandle BackboneHandle::mlp(std::size_t in_width, std::size_t out_width, double mlp_ratio, double dropout,
                                   Rng& rng) {
    BackboneHandle h;
    h.kind_ = BackboneKind::Mlp;
    h.in_width_ = in_width;
    h.out_width_ = out_width;
    h.dropout_ = dropout;
    auto hidden = static_cast<std::size_t>(mlp_ratio * static_cast<double>(in_width) + 0.5);
    if (hidden == 0) hidden = 1;
    h.l1 = Linear(in_width, hidden, rng);
    h.l2 = Linear(hidden, hidden, rng);
    h.l3 = Linear(hidden, out_width, rng);
    return h;
}

BackboneHandle BackboneHandle::external(std::size_t in_width, std::size_t out_width, Function fn,
                                        ParameterList params) {
    if (!fn) throw ContractError("external backbone needs a callable");
    BackboneHandle h;
    h.kind_ = BackboneKind::External;
    h.in_width_ = in_width;
    h.out_width_ = out_width;
    h.fn_ = std::move(fn);
    h.external_params_ = std::move(params);
    return h;
}

Tensor BackboneHandle::operator()(const Tensor& h_f, const ForwardContext& ctx) const {
    if (h_f.dim() != 3 || h_f.size(2) != in_width_) {
        throw ShapeError("backbone expects [B, N, " + std::to_string(in_width_) + "], got " + shape_str(h_f.shape()));
    }
    if (kind_ == BackboneKind::Mlp) {
        auto x = relu(l1(h_f));
        if (ctx.training && dropout_ > 0.0) x = dropout(x, dropout_, true, ctx.generator());
        x = relu(l2(x));
        if (ctx.training && dropout_ > 0.0) x = dropout(x, dropout_, true, ctx.generator());
        return l3(x);
    }
    auto out = fn_(h_f, ctx);
    const Shape want{h_f.size(0), h_f.size(1), out_width_};
    if (out.shape() != want) {
        throw ContractError("external backbone returned " + shape_str(out.shape()) + ", contract requires " +
                            shape_str(want));
    }
    return out;
}

void BackboneHandle::collect(const std::string& prefix, ParameterList& out) const {
    const auto start = out.size();
    if (kind_ == BackboneKind::Mlp) {
        l1.collect(prefix + ".l1", out);
        l2.collect(prefix + ".l2", out);
        l3.collect(prefix + ".l3", out);
    } else {
        for (const auto& p : external_params_) out.push_back({prefix + "." + p.name, p.tensor, p.trainable});
    }
    for (auto i = start; i < out.size(); ++i) out[i].trainable = out[i].trainable && trainable_;
}

void BackboneHandle::set_trainable(bool trainable) {
    trainable_ = trainable;
    ParameterList params;
    collect("backbone", params);
    for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

ResidualEnhancer::ResidualEnhancer(std::size_t in_width, std::size_t branch_width, Rng& rng)
    : w1(in_width, branch_width, rng), conv1(branch_width, branch_width, rng), w2(branch_width, branch_width, rng),
      conv2(branch_width, branch_width, rng) {}

Tensor ResidualEnhancer::branch(const Tensor& h_f) const { return conv2(w2(relu(conv1(w1(h_f))))); }

Tensor ResidualEnhancer::operator()(const Tensor& h_f, const Tensor& backbone_out) const {
    return concat({backbone_out, branch(h_f)}, 2);
}

void ResidualEnhancer::collect(const std::string& prefix, ParameterList& out) const {
    w1.collect(prefix + ".w1", out);
    conv1.collect(prefix + ".conv1", out);
    w2.collect(prefix + ".w2", out);
    conv2.collect(prefix + ".conv2", out);
}

OutputHead::OutputHead(const ModelConfig& cfg, Rng& rng)
    : norm(cfg.fused_dim()),
      ffn(cfg.fused_dim(), cfg.mlp_hidden(cfg.fused_dim()), cfg.dropout, rng),
      proj(cfg.fused_dim(), cfg.output_len * cfg.output_dim, rng),
      horizon(cfg.output_len),
      out_dim(cfg.output_dim) {}

Tensor OutputHead::operator()(const Tensor& z, const ForwardContext& ctx) const {
    if (z.dim() != 3 || z.size(2) != proj.in_features()) {
        throw ShapeError("output head expects [B, N, " + std::to_string(proj.in_features()) + "], got " +
                         shape_str(z.shape()));
    }
    const auto b = z.size(0), n = z.size(1);
    auto y = proj(add(norm(z), ffn(z, ctx)));
    return permute(reshape(y, {b, n, horizon, out_dim}), {0, 2, 1, 3});
}

void OutputHead::collect(const std::string& prefix, ParameterList& out) const {
    norm.collect(prefix + ".norm", out);
    ffn.collect(prefix + ".ffn", out);
    proj.collect(prefix + ".proj", out);
}

} // namespace rast
