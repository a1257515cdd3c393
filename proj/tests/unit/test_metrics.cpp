#include <doctest.h>

#include <cmath>

#include "random_tensor.hpp"
#include "rast/errors.hpp"
#include "rast/metrics.hpp"
#include "rast/optim.hpp"

using namespace rast;
using rast::testing::random_tensor;

TEST_CASE("masked MAE hand oracle") {
    auto pred = Tensor::from({3}, {2, 2, 5}, true);
    auto target = Tensor::from({3}, {1, 2, 0});
    auto loss = masked_mae_loss(pred, target, 0.0);
    CHECK(loss.valid == 2);
    CHECK(loss.value.item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(loss.warning.empty());
    loss.value.backward();
    CHECK(pred.grad()[0] == doctest::Approx(0.5));
    CHECK(pred.grad()[1] == 0.0);
    CHECK(pred.grad()[2] == 0.0);
}

TEST_CASE("masked MAE degenerate cases") {
    Rng rng(1);
    auto x = random_tensor({2, 3}, rng, false, 1.0, 2.0);
    CHECK(masked_mae_loss(x, x, 0.0).value.item() == 0.0);
    auto zeros = Tensor::zeros({2, 3});
    const auto all_null = masked_mae_loss(x, zeros, 0.0);
    CHECK(all_null.valid == 0);
    CHECK(all_null.value.item() == 0.0);
    CHECK_FALSE(all_null.warning.empty());
    CHECK_THROWS_AS(masked_mae_loss(x, Tensor::zeros({3, 2}), 0.0), ShapeError);
}

TEST_CASE("horizon-1 slice loss equals step-1 MAE") {
    Rng rng(2);
    auto pred = random_tensor({2, 4, 3, 1}, rng, false);
    auto target = random_tensor({2, 4, 3, 1}, rng, false, 0.5, 1.5);
    std::vector<std::uint8_t> valid(3 * 2, 1);
    const auto sliced = masked_mae_loss(slice(pred, 1, 0, 1), slice(target, 1, 0, 1), valid).value.item();
    double sum = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t n = 0; n < 3; ++n) sum += std::abs(pred.at({b, 0, n, 0}) - target.at({b, 0, n, 0}));
    }
    CHECK(sliced == doctest::Approx(sum / 6.0).epsilon(1e-14));
}

TEST_CASE("single-point metrics") {
    const std::vector<double> y{2.0}, p{1.0};
    const auto r = metric_row(p, y, 0.0);
    CHECK(r.mae == 1.0);
    CHECK(r.rmse == 1.0);
    CHECK(std::abs(r.mape - 100.0 / (2.0 + 1e-5)) < 1e-9);
    CHECK(std::abs(r.mape - 49.99975000125) < 1e-9);
}

TEST_CASE("crafted horizon metrics with masking") {
    // One sample, twelve steps, one series. Step 5 is null.
    std::vector<double> y(12), p(12);
    for (std::size_t h = 1; h <= 12; ++h) {
        y[h - 1] = h == 5 ? 0.0 : static_cast<double>(h);
        p[h - 1] = static_cast<double>(h) + (h % 2 ? -0.5 : 0.5) * static_cast<double>(h);
    }
    const auto m = compute_metrics(p, y, 1, 12, 1, 0.0);
    REQUIRE(m.rows.size() == 4);
    CHECK(m.rows[0].name == "h3");
    CHECK(m.rows[1].name == "h6");
    CHECK(m.rows[2].name == "h12");
    CHECK(m.rows[3].name == "avg");
    CHECK(std::abs(m.row("h3").mae - 1.5) < 1e-9);
    CHECK(std::abs(m.row("h6").rmse - 3.0) < 1e-9);
    CHECK(std::abs(m.row("h12").mape - 100.0 * 6.0 / (12.0 + 1e-5)) < 1e-9);
    const auto& avg = m.row("avg");
    CHECK(avg.count == 11);
    double abs_sum = 0.0, sq_sum = 0.0, pct = 0.0;
    for (double h : {1.0, 2.0, 3.0, 4.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0}) {
        abs_sum += 0.5 * h;
        sq_sum += 0.25 * h * h;
        pct += 0.5 * h / (h + 1e-5);
    }
    CHECK(std::abs(avg.mae - abs_sum / 11.0) < 1e-9);
    CHECK(std::abs(avg.rmse - std::sqrt(sq_sum / 11.0)) < 1e-9);
    CHECK(std::abs(avg.mape - 100.0 * pct / 11.0) < 1e-9);
}

TEST_CASE("perfect predictions and RMSE >= MAE") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    std::vector<double> y(2 * 12 * 4);
    for (auto& v : y) v = u(rng);
    const auto perfect = compute_metrics(y, y, 2, 12, 4, 0.0);
    for (const auto& r : perfect.rows) {
        CHECK(r.mae == 0.0);
        CHECK(r.rmse == 0.0);
        CHECK(r.mape == 0.0);
    }
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(y.size());
        for (auto& v : p) v = u(rng);
        for (const auto& r : compute_metrics(p, y, 2, 12, 4, 0.0).rows) CHECK(r.rmse >= r.mae);
    }
}

TEST_CASE("short horizons clamp the step rows") {
    const std::vector<double> y{1, 2, 3, 4}, p{1, 2, 3, 5};
    const auto m = compute_metrics(p, y, 1, 4, 1, 0.0);
    CHECK(m.row("h3").step == 3);
    CHECK(m.row("h6").step == 4);
    CHECK(m.row("h12").mae == 1.0);
    const auto none = compute_metrics(p, std::vector<double>(4, 0.0), 1, 4, 1, 0.0);
    CHECK_FALSE(none.warnings.empty());
}

TEST_CASE("metrics report JSON round trip") {
    const std::vector<double> y{1, 2, 3}, p{1.5, 2, 2};
    const auto m = compute_metrics(p, y, 1, 3, 1, 0.0);
    const auto back = MetricsReport::from_json(m.to_json());
    REQUIRE(back.rows.size() == m.rows.size());
    for (std::size_t i = 0; i < m.rows.size(); ++i) CHECK(back.rows[i].mae == m.rows[i].mae);
}

namespace {

ParameterList single(const Tensor& t) { return {{"w", t, true}}; }

void set_grad(Tensor& t, std::vector<double> g) {
    auto dst = t.mutable_grad();
    std::copy(g.begin(), g.end(), dst.begin());
}

} // namespace

TEST_CASE("zero gradients without decay leave parameters unchanged") {
    auto w = Tensor::from({3}, {1, -2, 3}, true);
    auto params = single(w);
    set_grad(w, {0, 0, 0});
    AdamState s;
    CHECK(adam_step(params, s, AdamOptions{}, 0.01));
    CHECK(w.to_vector() == std::vector<double>{1, -2, 3});
}

TEST_CASE("constant gradient Adam matches the closed form") {
    // With a constant gradient the bias-corrected moments equal g and g^2,
    // so every step moves by lr * g / (|g| + eps).
    const double lr = 0.01, g = 0.3, eps = 1e-8;
    auto w = Tensor::from({1}, {1.0}, true);
    auto params = single(w);
    AdamState s;
    AdamOptions opt;
    opt.eps = eps;
    double expected = 1.0;
    for (int step = 0; step < 5; ++step) {
        set_grad(w, {g});
        CHECK(adam_step(params, s, opt, lr));
        expected -= lr * g / (g + eps);
        CHECK(std::abs(w.data()[0] - expected) < 1e-12);
    }
    CHECK(s.step == 5);
    CHECK(std::abs((1.0 - w.data()[0]) / 5.0 - lr) < 1e-6);
}

TEST_CASE("decoupled weight decay") {
    auto w = Tensor::from({2}, {2.0, -4.0}, true);
    auto params = single(w);
    set_grad(w, {0, 0});
    AdamState s;
    AdamOptions opt;
    opt.weight_decay = 1e-5;
    adam_step(params, s, opt, 0.002);
    CHECK(w.data()[0] == doctest::Approx(2.0 * (1.0 - 0.002 * 1e-5)).epsilon(1e-15));
    CHECK(w.data()[1] == doctest::Approx(-4.0 * (1.0 - 0.002 * 1e-5)).epsilon(1e-15));
}

TEST_CASE("gradient clipping to max_norm") {
    auto a = Tensor::from({2}, {0, 0}, true);
    auto b = Tensor::from({1}, {0}, true);
    ParameterList params{{"a", a, true}, {"b", b, true}};
    set_grad(a, {30, 0});
    set_grad(b, {40});
    CHECK(grad_norm(params) == doctest::Approx(50.0));
    const double before = clip_grad_norm(params, 5.0);
    CHECK(before == doctest::Approx(50.0));
    CHECK(std::abs(grad_norm(params) - 5.0) < 1e-9);
    CHECK(a.grad()[0] == doctest::Approx(3.0));
    CHECK(b.grad()[0] == doctest::Approx(4.0));
    set_grad(a, {0.3, 0});
    set_grad(b, {0.4});
    clip_grad_norm(params, 5.0);
    CHECK(grad_norm(params) == doctest::Approx(0.5));
}

TEST_CASE("non-finite gradients skip the step") {
    auto w = Tensor::from({2}, {1, 1}, true);
    auto params = single(w);
    set_grad(w, {std::nan(""), 1.0});
    AdamState s;
    CHECK_FALSE(adam_step(params, s, AdamOptions{}, 0.1));
    CHECK(s.skipped == 1);
    CHECK(s.step == 0);
    CHECK(w.to_vector() == std::vector<double>{1, 1});
}

TEST_CASE("frozen parameters are not updated") {
    auto w = Tensor::from({1}, {1.0}, true);
    ParameterList params{{"w", w, false}};
    set_grad(w, {1.0});
    AdamState s;
    adam_step(params, s, AdamOptions{}, 0.1);
    CHECK(w.data()[0] == 1.0);
}

TEST_CASE("multistep schedule over epochs 0-100") {
    TrainConfig t;
    const std::vector<std::size_t> ms{1, 30, 38, 46, 54, 62, 70, 80};
    for (std::size_t e = 0; e <= 100; ++e) {
        int passed = 0;
        for (auto m : ms) passed += m <= e ? 1 : 0;
        CHECK(lr_schedule(e, t) == 0.002 * std::pow(0.5, passed));
    }
    CHECK(lr_schedule(0, t) == 0.002);
    CHECK(lr_schedule(1, t) == 0.001);
    CHECK(lr_schedule(80, t) == 0.002 * std::pow(0.5, 8));
}

TEST_CASE("curriculum horizon") {
    TrainConfig t;
    CHECK(curriculum_horizon(0, t, 12) == 1);
    CHECK(curriculum_horizon(t.warm_epochs - 1, t, 12) == 1);
    CHECK(curriculum_horizon(t.warm_epochs, t, 12) == 1);
    CHECK(curriculum_horizon(t.warm_epochs + 2 * t.cl_epochs, t, 12) == 3);
    CHECK(curriculum_horizon(t.warm_epochs + 11 * t.cl_epochs, t, 12) == 12);
    CHECK(curriculum_horizon(1000, t, 12) == 12);
    t.cl_epochs = 0;
    CHECK(curriculum_horizon(0, t, 12) == 12);
}
