#include "rast/optim.hpp"

#include <algorithm>
#include <cmath>

#include "rast/errors.hpp"

namespace rast {

AdamOptions AdamOptions::from(const TrainConfig& t) {
    return {t.beta1, t.beta2, t.eps, t.weight_decay, t.max_norm};
}

double grad_norm(const ParameterList& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

double clip_grad_norm(ParameterList& params, double max_norm) {
    const double norm = grad_norm(params);
    if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
        const double f = max_norm / norm;
        for (auto& p : params) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            for (double& g : p.tensor.mutable_grad()) g *= f;
        }
    }
    return norm;
}

bool adam_step(ParameterList& params, AdamState& state, const AdamOptions& opt, double lr) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
    }
    if (state.m.size() != params.size()) throw ContractError("optimizer state built for a different parameter list");
    for (const auto& p : params) {
        if (!p.trainable || !p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) {
                ++state.skipped;
                return false;
            }
        }
    }
    if (opt.max_norm > 0.0) clip_grad_norm(params, opt.max_norm);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.trainable || !p.tensor.has_grad()) continue;
        auto w = p.tensor.mutable_data();
        auto g = p.tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != w.size()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (opt.weight_decay != 0.0) w[j] -= lr * opt.weight_decay * w[j];
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            w[j] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps);
        }
    }
    return true;
}

double lr_schedule(std::size_t epoch, const TrainConfig& t) {
    const auto passed = std::count_if(t.milestones.begin(), t.milestones.end(), [&](auto m) { return m <= epoch; });
    return t.learning_rate * std::pow(t.gamma, static_cast<double>(passed));
}

std::size_t curriculum_horizon(std::size_t epoch, const TrainConfig& t, std::size_t horizon) {
    if (t.cl_epochs == 0 || horizon == 0) return horizon;
    if (epoch < t.warm_epochs) return 1;
    return std::min(horizon, 1 + (epoch - t.warm_epochs) / t.cl_epochs);
}

} // namespace rast
