#include "rast/nn.hpp"

#include <cmath>

#include "rast/errors.hpp"

namespace rast {

Rng& ForwardContext::generator() const {
    if (!rng) throw ContractError("forward pass in training mode needs a random generator");
    return *rng;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = u(rng);
    return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

Tensor kaiming_normal(const Shape& kernel_shape, Rng& rng) {
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < kernel_shape.size(); ++i) fan_in *= kernel_shape[i];
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(shape_numel(kernel_shape));
    for (auto& v : w) v = n(rng);
    return Tensor::from(kernel_shape, std::move(w), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(xavier_uniform(in, out, rng)), bias(Tensor::zeros({out}, true)) {}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t width, double eps_)
    : gamma(Tensor::full({width}, 1.0, true)), beta(Tensor::zeros({width}, true)), eps(eps_) {}

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

FeedForward::FeedForward(std::size_t width, std::size_t hidden, double dropout_, Rng& rng)
    : up(width, hidden, rng), down(hidden, width, rng), dropout(dropout_) {}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
    auto h = relu(up(x));
    if (ctx.training && dropout > 0.0) h = rast::dropout(h, dropout, true, ctx.generator());
    return down(h);
}

void FeedForward::collect(const std::string& prefix, ParameterList& out) const {
    up.collect(prefix + ".up", out);
    down.collect(prefix + ".down", out);
}

PointwiseConv::PointwiseConv(std::size_t in, std::size_t out, Rng& rng)
    : kernel(kaiming_normal({out, in, 1, 1}, rng)), bias(Tensor::zeros({out}, true)) {}

Tensor PointwiseConv::operator()(const Tensor& x) const {
    if (x.dim() != 3) throw ShapeError("pointwise conv expects [B, N, C], got " + shape_str(x.shape()));
    const std::size_t B = x.size(0), N = x.size(1);
    auto img = reshape(permute(x, {0, 2, 1}), {B, x.size(2), N, 1});
    auto y = conv2d(img, kernel, bias);
    return permute(reshape(y, {B, kernel.size(0), N}), {0, 2, 1});
}

void PointwiseConv::collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".bias", bias});
}

void set_trainable(ParameterList& params, bool trainable) {
    for (auto& p : params) p.trainable = trainable;
}

} // namespace rast
