#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rast/tensor.hpp"

namespace rast {

inline constexpr double kMapeEpsilon = 1e-5;

struct MaskedLoss {
    Tensor value;            // scalar; constant 0 when nothing is valid
    std::size_t valid = 0;
    std::string warning;
};

/// Mean |pred - target| over entries with valid[i] != 0. `valid` follows the
/// row-major layout of `pred`.
MaskedLoss masked_mae_loss(const Tensor& pred, const Tensor& target, const std::vector<std::uint8_t>& valid);
/// Validity from a null sentinel on the target values.
MaskedLoss masked_mae_loss(const Tensor& pred, const Tensor& target, double null_val);

struct MetricRow {
    std::string name;     // h3, h6, h12, avg
    std::size_t step = 0; // 1-based horizon step; 0 for the average
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
    std::size_t count = 0;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    std::vector<std::string> warnings;

    const MetricRow& row(const std::string& name) const;
    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

/// One pooled row over every valid entry of the given values.
MetricRow metric_row(std::span<const double> pred, std::span<const double> target, double null_val);

/// `pred` and `target` are de-normalized [S, H, N, D] arrays. Rows for steps
/// 3, 6 and 12 (clamped to H) plus the pooled average over all H steps.
MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> target, std::size_t samples,
                              std::size_t horizon, std::size_t per_step, double null_val);

} // namespace rast
