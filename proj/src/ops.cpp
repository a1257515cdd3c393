#include "rast/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rast/errors.hpp"

namespace rast {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
    const Shape* out_shape = nullptr;
    if (a.shape() == b.shape() || is_suffix(b.shape(), a.shape())) {
        out_shape = &a.shape();
    } else if (is_suffix(a.shape(), b.shape())) {
        out_shape = &b.shape();
    } else {
        throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t n = shape_numel(*out_shape);
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    auto ad = a.data();
    auto bd = b.data();
    std::vector<double> out(n);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
        case BinaryKind::Add: out[i] = ad[ia] + bd[ib]; break;
        case BinaryKind::Sub: out[i] = ad[ia] - bd[ib]; break;
        case BinaryKind::Mul: out[i] = ad[ia] * bd[ib]; break;
        }
        if (++ia == na) ia = 0;
        if (++ib == nb) ib = 0;
    }
    return make_op_result(*out_shape, std::move(out), name, {a, b}, [kind, n, na, nb, a, b](const detail::Backprop& bp) {
        auto ad = a.data();
        auto bd = b.data();
        double* ga = bp.in[0];
        double* gb = bp.in[1];
        std::size_t ia = 0, ib = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = bp.out[i];
            switch (kind) {
            case BinaryKind::Add:
                if (ga) ga[ia] += g;
                if (gb) gb[ib] += g;
                break;
            case BinaryKind::Sub:
                if (ga) ga[ia] += g;
                if (gb) gb[ib] -= g;
                break;
            case BinaryKind::Mul:
                if (ga) ga[ia] += g * bd[ib];
                if (gb) gb[ib] += g * ad[ia];
                break;
            }
            if (++ia == na) ia = 0;
            if (++ib == nb) ib = 0;
        }
    });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
    auto xd = x.data();
    std::vector<double> out(xd.size());
    std::transform(xd.begin(), xd.end(), out.begin(), fwd);
    return make_op_result(x.shape(), std::move(out), name, {x}, [x, deriv](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        auto xd = x.data();
        for (std::size_t i = 0; i < xd.size(); ++i) bp.in[0][i] += bp.out[i] * deriv(xd[i]);
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
    return unary(x, "scale", [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

Tensor relu(const Tensor& x) {
    return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, "abs", [](double v) { return std::abs(v); },
        [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) {
        throw ShapeError("matmul: operands must be at least 2-D, got " + shape_str(as) + " and " + shape_str(bs));
    }
    const std::size_t m = as[as.size() - 2], k = as.back();
    const std::size_t k2 = bs[bs.size() - 2], n = bs.back();
    if (k != k2) throw ShapeError("matmul: inner extents differ for " + shape_str(as) + " and " + shape_str(bs));

    const Shape batch_a(as.begin(), as.end() - 2);
    const Shape batch_b(bs.begin(), bs.end() - 2);
    Shape out_shape;
    bool shared_a = false, shared_b = false;
    if (batch_a == batch_b) {
        out_shape = batch_a;
    } else if (batch_b.empty()) {
        out_shape = batch_a;
        shared_b = true;
    } else if (batch_a.empty()) {
        out_shape = batch_b;
        shared_a = true;
    } else {
        throw ShapeError("matmul: batch extents not broadcastable for " + shape_str(as) + " and " + shape_str(bs));
    }
    const std::size_t batch = shape_numel(out_shape);
    out_shape.push_back(m);
    out_shape.push_back(n);

    std::vector<double> out(batch * m * n);
    auto ad = a.data();
    auto bd = b.data();
    if (shared_b || batch == 1) {
        MutMap(out.data(), batch * m, n).noalias() = ConstMap(ad.data(), batch * m, k) * ConstMap(bd.data(), k, n);
    } else {
        for (std::size_t i = 0; i < batch; ++i) {
            const double* ap = ad.data() + (shared_a ? 0 : i * m * k);
            const double* bp = bd.data() + i * k * n;
            MutMap(out.data() + i * m * n, m, n).noalias() = ConstMap(ap, m, k) * ConstMap(bp, k, n);
        }
    }

    return make_op_result(std::move(out_shape), std::move(out), "matmul", {a, b},
                          [a, b, batch, m, k, n, shared_a, shared_b](const detail::Backprop& bp) {
        auto ad = a.data();
        auto bd = b.data();
        const double* g = bp.out.data();
        if (shared_b || batch == 1) {
            ConstMap gm(g, batch * m, n);
            if (bp.in[0]) MutMap(bp.in[0], batch * m, k).noalias() += gm * ConstMap(bd.data(), k, n).transpose();
            if (bp.in[1]) MutMap(bp.in[1], k, n).noalias() += ConstMap(ad.data(), batch * m, k).transpose() * gm;
            return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
            ConstMap gm(g + i * m * n, m, n);
            const std::size_t a_off = shared_a ? 0 : i * m * k;
            const std::size_t b_off = i * k * n;
            if (bp.in[0]) {
                MutMap(bp.in[0] + a_off, m, k).noalias() += gm * ConstMap(bd.data() + b_off, k, n).transpose();
            }
            if (bp.in[1]) {
                MutMap(bp.in[1] + b_off, k, n).noalias() += ConstMap(ad.data() + a_off, m, k).transpose() * gm;
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.dim() != 2) throw ShapeError("linear: weight must be 2-D, got " + shape_str(weight.shape()));
    if (x.size(-1) != weight.size(0)) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
    }
    Tensor y;
    if (x.dim() == 1) {
        y = reshape(matmul(reshape(x, {1, x.numel()}), weight), {weight.size(1)});
    } else {
        y = matmul(x, weight);
    }
    return bias.defined() ? add(y, bias) : y;
}

namespace {

// Softmax core over strided slices; keep may be null (nothing masked).
Tensor softmax_impl(const Tensor& x, std::size_t axis, const std::vector<std::uint8_t>* keep, const char* name) {
    const auto split = split_at(x.shape(), axis);
    auto xd = x.data();
    std::vector<double> out(xd.size(), 0.0);
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t base = o * split.len * split.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::size_t j = 0; j < split.len; ++j) {
                const std::size_t idx = base + j * split.inner;
                if (keep && !(*keep)[idx]) continue;
                if (!std::isfinite(xd[idx])) throw NumericError(std::string(name) + ": non-finite input");
                mx = std::max(mx, xd[idx]);
                any = true;
            }
            if (!any) continue;
            double total = 0.0;
            for (std::size_t j = 0; j < split.len; ++j) {
                const std::size_t idx = base + j * split.inner;
                if (keep && !(*keep)[idx]) continue;
                out[idx] = std::exp(xd[idx] - mx);
                total += out[idx];
            }
            for (std::size_t j = 0; j < split.len; ++j) out[base + j * split.inner] /= total;
        }
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_op_result(x.shape(), std::move(out), name, {x}, [y, split](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        const auto& yv = *y;
        for (std::size_t o = 0; o < split.outer; ++o) {
            for (std::size_t in = 0; in < split.inner; ++in) {
                const std::size_t base = o * split.len * split.inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < split.len; ++j) {
                    const std::size_t idx = base + j * split.inner;
                    dot += bp.out[idx] * yv[idx];
                }
                for (std::size_t j = 0; j < split.len; ++j) {
                    const std::size_t idx = base + j * split.inner;
                    bp.in[0][idx] += yv[idx] * (bp.out[idx] - dot);
                }
            }
        }
    });
}

} // namespace

Tensor softmax(const Tensor& x, int axis) {
    return softmax_impl(x, normalize_axis(axis, x.dim(), "softmax"), nullptr, "softmax");
}

Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& keep) {
    if (keep.size() != x.numel()) {
        throw ShapeError("masked_softmax: mask has " + std::to_string(keep.size()) + " flags for shape " +
                         shape_str(x.shape()));
    }
    return softmax_impl(x, x.dim() - 1, &keep, "masked_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    const std::size_t d = x.size(-1);
    const std::size_t rows = x.numel() / d;
    if (gamma.defined() && gamma.shape() != Shape{d}) {
        throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape()) + " for feature width " + std::to_string(d));
    }
    if (beta.defined() && beta.shape() != Shape{d}) {
        throw ShapeError("layer_norm: beta " + shape_str(beta.shape()) + " for feature width " + std::to_string(d));
    }
    auto xd = x.data();
    auto xhat = std::make_shared<std::vector<double>>(xd.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (row[j] - mu) * inv;
            (*xhat)[r * d + j] = h;
            const double g = gamma.defined() ? gamma.data()[j] : 1.0;
            const double b = beta.defined() ? beta.data()[j] : 0.0;
            out[r * d + j] = g * h + b;
        }
    }

    std::vector<Tensor> inputs{x};
    const int gi = gamma.defined() ? static_cast<int>(inputs.size()) : -1;
    if (gamma.defined()) inputs.push_back(gamma);
    const int bi = beta.defined() ? static_cast<int>(inputs.size()) : -1;
    if (beta.defined()) inputs.push_back(beta);

    return make_op_result(x.shape(), std::move(out), "layer_norm", inputs,
                          [gamma, xhat, inv_std, rows, d, gi, bi](const detail::Backprop& bp) {
        double* gx = bp.in[0];
        double* gg = gi >= 0 ? bp.in[static_cast<std::size_t>(gi)] : nullptr;
        double* gb = bi >= 0 ? bp.in[static_cast<std::size_t>(bi)] : nullptr;
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = bp.out.data() + r * d;
            const double* h = xhat->data() + r * d;
            if (gg) for (std::size_t j = 0; j < d; ++j) gg[j] += g[j] * h[j];
            if (gb) for (std::size_t j = 0; j < d; ++j) gb[j] += g[j];
            if (!gx) continue;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dxhat[j] = g[j] * (gamma.defined() ? gamma.data()[j] : 1.0);
                m1 += dxhat[j];
                m2 += dxhat[j] * h[j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            const double inv = (*inv_std)[r];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += inv * (dxhat[j] - m1 - h[j] * m2);
        }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& opt) {
    if (x.dim() != 4 || kernel.dim() != 4) {
        throw ShapeError("conv2d: expected 4-D input and kernel, got " + shape_str(x.shape()) + " and " +
                         shape_str(kernel.shape()));
    }
    const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const std::size_t O = kernel.size(0), KH = kernel.size(2), KW = kernel.size(3);
    if (kernel.size(1) != C) {
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input channels of " +
                         shape_str(x.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{O}) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(O) + " output channels");
    }
    if (opt.stride_h == 0 || opt.stride_w == 0 || opt.dilation_h == 0 || opt.dilation_w == 0) {
        throw ContractError("conv2d: stride and dilation must be positive");
    }
    const std::size_t eff_h = opt.dilation_h * (KH - 1) + 1;
    const std::size_t eff_w = opt.dilation_w * (KW - 1) + 1;
    if (H + 2 * opt.pad_h < eff_h || W + 2 * opt.pad_w < eff_w) {
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
    }
    const std::size_t OH = (H + 2 * opt.pad_h - eff_h) / opt.stride_h + 1;
    const std::size_t OW = (W + 2 * opt.pad_w - eff_w) / opt.stride_w + 1;
    const std::size_t ckk = C * KH * KW;
    const std::size_t P = OH * OW;

    // im2col with one (ckk x P) block per batch item; kept for the kernel gradient.
    auto cols = std::make_shared<std::vector<double>>(B * ckk * P, 0.0);
    auto src_index = std::make_shared<std::vector<std::ptrdiff_t>>(ckk * P, -1);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t kh = 0; kh < KH; ++kh) {
            for (std::size_t kw = 0; kw < KW; ++kw) {
                const std::size_t row = (c * KH + kh) * KW + kw;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * opt.stride_h + kh * opt.dilation_h) -
                                    static_cast<std::ptrdiff_t>(opt.pad_h);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * opt.stride_w + kw * opt.dilation_w) -
                                        static_cast<std::ptrdiff_t>(opt.pad_w);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        (*src_index)[row * P + oh * OW + ow] =
                            static_cast<std::ptrdiff_t>((c * H + static_cast<std::size_t>(ih)) * W) + iw;
                    }
                }
            }
        }
    }
    auto xd = x.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* xb = xd.data() + b * C * H * W;
        double* cb = cols->data() + b * ckk * P;
        for (std::size_t i = 0; i < ckk * P; ++i) {
            const auto s = (*src_index)[i];
            if (s >= 0) cb[i] = xb[s];
        }
    }

    std::vector<double> out(B * O * P);
    ConstMap wmat(kernel.data().data(), O, ckk);
    for (std::size_t b = 0; b < B; ++b) {
        MutMap ob(out.data() + b * O * P, O, P);
        ob.noalias() = wmat * ConstMap(cols->data() + b * ckk * P, ckk, P);
        if (bias.defined()) {
            for (std::size_t o = 0; o < O; ++o) ob.row(static_cast<Eigen::Index>(o)).array() += bias.data()[o];
        }
    }

    std::vector<Tensor> inputs{x, kernel};
    if (bias.defined()) inputs.push_back(bias);
    const bool has_bias = bias.defined();
    return make_op_result({B, O, OH, OW}, std::move(out), "conv2d", inputs,
                          [kernel, cols, src_index, B, C, H, W, O, ckk, P, has_bias](const detail::Backprop& bp) {
        ConstMap wmat(kernel.data().data(), O, ckk);
        std::vector<double> dcols(ckk * P);
        for (std::size_t b = 0; b < B; ++b) {
            ConstMap gb(bp.out.data() + b * O * P, O, P);
            if (bp.in[1]) {
                MutMap(bp.in[1], O, ckk).noalias() += gb * ConstMap(cols->data() + b * ckk * P, ckk, P).transpose();
            }
            if (has_bias && bp.in[2]) {
                for (std::size_t o = 0; o < O; ++o) bp.in[2][o] += gb.row(static_cast<Eigen::Index>(o)).sum();
            }
            if (bp.in[0]) {
                MutMap(dcols.data(), ckk, P).noalias() = wmat.transpose() * gb;
                double* gx = bp.in[0] + b * C * H * W;
                for (std::size_t i = 0; i < ckk * P; ++i) {
                    const auto s = (*src_index)[i];
                    if (s >= 0) gx[s] += dcols[i];
                }
            }
        }
    });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding,
              std::size_t dilation) {
    if (x.dim() != 3 || kernel.dim() != 3) {
        throw ShapeError("conv1d: expected 3-D input and kernel, got " + shape_str(x.shape()) + " and " +
                         shape_str(kernel.shape()));
    }
    Conv2dOptions opt;
    opt.stride_w = stride;
    opt.pad_w = padding;
    opt.dilation_w = dilation;
    auto x4 = reshape(x, {x.size(0), x.size(1), 1, x.size(2)});
    auto k4 = reshape(kernel, {kernel.size(0), kernel.size(1), 1, kernel.size(2)});
    auto y = conv2d(x4, k4, bias, opt);
    return reshape(y, {y.size(0), y.size(1), y.size(3)});
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must be in [0, 1)");
    if (!training || p == 0.0) return x;
    const double keep = 1.0 - p;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    for (auto& m : *mask) m = u(rng) < keep ? 1.0 / keep : 0.0;
    auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * (*mask)[i];
    return make_op_result(x.shape(), std::move(out), "dropout", {x}, [mask](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        for (std::size_t i = 0; i < mask->size(); ++i) bp.in[0][i] += bp.out[i] * (*mask)[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const auto& first = parts.front().shape();
    const std::size_t ax = normalize_axis(axis, first.size(), "concat");
    Shape out_shape = first;
    out_shape[ax] = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == first[i];
        if (!ok) throw ShapeError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
        out_shape[ax] += s[ax];
    }
    const auto split = split_at(out_shape, ax);
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(p.size(static_cast<int>(ax)) * split.inner);
    const std::size_t row = split.len * split.inner;

    std::vector<double> out(shape_numel(out_shape));
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::size_t off = o * row;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            auto d = parts[k].data();
            std::copy_n(d.data() + o * widths[k], widths[k], out.data() + off);
            off += widths[k];
        }
    }
    return make_op_result(std::move(out_shape), std::move(out), "concat", parts,
                          [widths, row, outer = split.outer](const detail::Backprop& bp) {
        for (std::size_t o = 0; o < outer; ++o) {
            std::size_t off = o * row;
            for (std::size_t k = 0; k < widths.size(); ++k) {
                if (double* g = bp.in[k]) {
                    for (std::size_t i = 0; i < widths[k]; ++i) g[o * widths[k] + i] += bp.out[off + i];
                }
                off += widths[k];
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    auto xd = x.data();
    return make_op_result(std::move(shape), std::vector<double>(xd.begin(), xd.end()), "reshape", {x},
                          [](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        for (std::size_t i = 0; i < bp.out.size(); ++i) bp.in[0][i] += bp.out[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const auto& s = x.shape();
    const std::size_t rank = s.size();
    if (axes.size() != rank) throw ShapeError("permute: axes rank mismatch for " + shape_str(s));
    std::vector<bool> used(rank, false);
    for (auto a : axes) {
        if (a >= rank || used[a]) throw ShapeError("permute: invalid axes for " + shape_str(s));
        used[a] = true;
    }
    std::vector<std::size_t> in_stride(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = s[axes[i]];

    const std::size_t n = x.numel();
    auto source = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        (*source)[flat] = src;
        for (std::size_t i = rank; i-- > 0;) {
            ++idx[i];
            src += in_stride[axes[i]];
            if (idx[i] < out_shape[i]) break;
            src -= in_stride[axes[i]] * out_shape[i];
            idx[i] = 0;
        }
    }
    auto xd = x.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = xd[(*source)[i]];
    return make_op_result(std::move(out_shape), std::move(out), "permute", {x}, [source](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        for (std::size_t i = 0; i < source->size(); ++i) bp.in[0][(*source)[i]] += bp.out[i];
    });
}

Tensor transpose(const Tensor& x, int axis_a, int axis_b) {
    const std::size_t a = normalize_axis(axis_a, x.dim(), "transpose");
    const std::size_t b = normalize_axis(axis_b, x.dim(), "transpose");
    std::vector<std::size_t> axes(x.dim());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[a], axes[b]);
    return permute(x, axes);
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
    const std::size_t ax = normalize_axis(axis, x.dim(), "slice");
    const auto split = split_at(x.shape(), ax);
    if (length == 0 || start + length > split.len) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for " + shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[ax] = length;
    const std::size_t block = length * split.inner;
    auto xd = x.data();
    std::vector<double> out(split.outer * block);
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(xd.data() + (o * split.len + start) * split.inner, block, out.data() + o * block);
    }
    return make_op_result(std::move(out_shape), std::move(out), "slice", {x},
                          [split, start, block](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        for (std::size_t o = 0; o < split.outer; ++o) {
            double* g = bp.in[0] + (o * split.len + start) * split.inner;
            for (std::size_t i = 0; i < block; ++i) g[i] += bp.out[o * block + i];
        }
    });
}

Tensor sum(const Tensor& x) {
    auto xd = x.data();
    const double total = std::accumulate(xd.begin(), xd.end(), 0.0);
    return make_op_result({1}, {total}, "sum", {x}, [n = xd.size()](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        for (std::size_t i = 0; i < n; ++i) bp.in[0][i] += bp.out[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, int axis) {
    const std::size_t ax = normalize_axis(axis, x.dim(), "sum");
    const auto split = split_at(x.shape(), ax);
    Shape out_shape;
    for (std::size_t i = 0; i < x.dim(); ++i) {
        if (i != ax) out_shape.push_back(x.shape()[i]);
    }
    if (out_shape.empty()) out_shape.push_back(1);
    auto xd = x.data();
    std::vector<double> out(split.outer * split.inner, 0.0);
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t j = 0; j < split.len; ++j) {
            const double* src = xd.data() + (o * split.len + j) * split.inner;
            double* dst = out.data() + o * split.inner;
            for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
        }
    }
    return make_op_result(std::move(out_shape), std::move(out), "sum_axis", {x}, [split](const detail::Backprop& bp) {
        if (!bp.in[0]) return;
        for (std::size_t o = 0; o < split.outer; ++o) {
            for (std::size_t j = 0; j < split.len; ++j) {
                double* g = bp.in[0] + (o * split.len + j) * split.inner;
                const double* src = bp.out.data() + o * split.inner;
                for (std::size_t i = 0; i < split.inner; ++i) g[i] += src[i];
            }
        }
    });
}

Tensor mean(const Tensor& x, int axis) {
    const double len = static_cast<double>(x.size(axis));
    return scale(sum(x, axis), 1.0 / len);
}

} // namespace rast
