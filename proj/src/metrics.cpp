#include "rast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "rast/errors.hpp"
#include "rast/ops.hpp"

namespace rast {

MaskedLoss masked_mae_loss(const Tensor& pred, const Tensor& target, const std::vector<std::uint8_t>& valid) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("loss operands differ: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    }
    if (valid.size() != pred.numel()) throw ShapeError("mask length does not match the prediction");
    MaskedLoss out;
    out.valid = static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
    if (out.valid == 0) {
        out.value = Tensor::scalar(0.0);
        out.warning = "no valid target entries; loss defined as 0";
        return out;
    }
    std::vector<double> m(valid.begin(), valid.end());
    auto mask = Tensor::from(pred.shape(), std::move(m));
    out.value = scale(sum(mul(abs(sub(pred, target)), mask)), 1.0 / static_cast<double>(out.valid));
    return out;
}

MaskedLoss masked_mae_loss(const Tensor& pred, const Tensor& target, double null_val) {
    auto t = target.data();
    std::vector<std::uint8_t> valid(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) valid[i] = t[i] != null_val ? 1 : 0;
    return masked_mae_loss(pred, target, valid);
}

const MetricRow& MetricsReport::row(const std::string& name) const {
    for (const auto& r : rows) {
        if (r.name == name) return r;
    }
    throw ContractError("metrics report has no row '" + name + "'");
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : rows) {
        rs.push_back({{"name", r.name}, {"step", r.step}, {"mae", r.mae},
                      {"rmse", r.rmse}, {"mape", r.mape}, {"count", r.count}});
    }
    return {{"rows", rs}, {"warnings", warnings}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport m;
    for (const auto& r : j.at("rows")) {
        m.rows.push_back({r.at("name").get<std::string>(), r.at("step").get<std::size_t>(), r.at("mae").get<double>(),
                          r.at("rmse").get<double>(), r.at("mape").get<double>(), r.at("count").get<std::size_t>()});
    }
    if (j.contains("warnings")) m.warnings = j["warnings"].get<std::vector<std::string>>();
    return m;
}

namespace {

struct Accum {
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    std::size_t count = 0;

    void add(double p, double y) {
        const double e = std::abs(y - p);
        abs_sum += e;
        sq_sum += e * e;
        pct_sum += e / (y + kMapeEpsilon);
        ++count;
    }

    MetricRow finish(std::string name, std::size_t step) const {
        MetricRow r{std::move(name), step, 0.0, 0.0, 0.0, count};
        if (count == 0) return r;
        const double c = static_cast<double>(count);
        r.mae = abs_sum / c;
        r.rmse = std::sqrt(sq_sum / c);
        r.mape = 100.0 * pct_sum / c;
        return r;
    }
};

} // namespace

MetricRow metric_row(std::span<const double> pred, std::span<const double> target, double null_val) {
    if (pred.size() != target.size()) throw ShapeError("metric operands differ in length");
    Accum a;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (target[i] != null_val) a.add(pred[i], target[i]);
    }
    return a.finish("all", 0);
}

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> target, std::size_t samples,
                              std::size_t horizon, std::size_t per_step, double null_val) {
    if (pred.size() != target.size()) throw ShapeError("metric operands differ in length");
    if (pred.size() != samples * horizon * per_step) {
        throw ShapeError("metric arrays hold " + std::to_string(pred.size()) + " values, expected S*H*N*D = " +
                         std::to_string(samples * horizon * per_step));
    }
    if (horizon == 0) throw ShapeError("horizon must be positive");
    std::vector<Accum> steps(horizon);
    Accum pooled;
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t h = 0; h < horizon; ++h) {
            const std::size_t base = (s * horizon + h) * per_step;
            for (std::size_t i = 0; i < per_step; ++i) {
                const double y = target[base + i];
                if (y == null_val) continue;
                steps[h].add(pred[base + i], y);
                pooled.add(pred[base + i], y);
            }
        }
    }
    MetricsReport m;
    for (std::size_t want : {3, 6, 12}) {
        const std::size_t step = std::min(want, horizon);
        m.rows.push_back(steps[step - 1].finish("h" + std::to_string(want), step));
    }
    m.rows.push_back(pooled.finish("avg", 0));
    if (pooled.count == 0) m.warnings.push_back("no valid target entries; metrics defined as 0");
    return m;
}

} // namespace rast
