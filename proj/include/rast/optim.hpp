#pragma once

#include <cstddef>
#include <vector>

#include "rast/config.hpp"
#include "rast/nn.hpp"

namespace rast {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled: p -= lr * weight_decay * p
    double max_norm = 0.0;     // 0 disables clipping

    static AdamOptions from(const TrainConfig& t);
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
    std::size_t skipped = 0;
};

/// Global L2 norm over the gradients of trainable parameters.
double grad_norm(const ParameterList& params);
/// Scales gradients so the global norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(ParameterList& params, double max_norm);

/// One bias-corrected Adam update over the trainable parameters. Parameters
/// without gradients are left alone. A non-finite gradient skips the whole
/// step and bumps `state.skipped`. Returns whether the step was applied.
bool adam_step(ParameterList& params, AdamState& state, const AdamOptions& opt, double lr);

/// base * gamma^(number of milestones <= epoch).
double lr_schedule(std::size_t epoch, const TrainConfig& t);

/// Supervised horizon: 1 until warm_epochs, then one more step every
/// cl_epochs, saturating at H. cl_epochs == 0 disables the curriculum.
std::size_t curriculum_horizon(std::size_t epoch, const TrainConfig& t, std::size_t horizon);

} // namespace rast
