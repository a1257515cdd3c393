// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "random_tensor.hpp"
#include "rast/bench.hpp"
#include "rast/checkpoint.hpp"
#include "rast/metrics.hpp"
#include "rast/model.hpp"
#include "rast/optim.hpp"
#include "rast/trainer.hpp"

using namespace rast;
using rast::testing::check_gradients;
using rast::testing::random_tensor;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor probe(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

std::vector<double> normal_rows(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n * d);
    for (auto& x : v) x = g(rng);
    return v;
}

MemoryBank bank_of(const std::vector<double>& rows, std::size_t d, std::uint64_t seed) {
    StorePolicy policy;
    policy.capacity = std::max(policy.capacity, rows.size() / d);
    MemoryBank bank(BankTag::Spatial, d, policy, seed);
    for (std::size_t i = 0; i < rows.size() / d; ++i) bank.insert(std::span(rows).subspan(i * d, d), 0);
    return bank;
}

// Full sort of (similarity, id) recomputed from the stored floats.
std::vector<std::uint32_t> brute_force(const MemoryBank& bank, std::span<const double> q, std::size_t k) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < bank.size(); ++i) {
        auto v = bank.vector(i);
        double s = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) s += (q[d] - v[d]) * (q[d] - v[d]);
        all.emplace_back(-s, i);
    }
    std::sort(all.begin(), all.end(),
              [](auto& a, auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::uint32_t> ids;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].second);
    return ids;
}

std::vector<std::uint32_t> ids_of(const std::vector<SearchHit>& hits) {
    std::vector<std::uint32_t> ids;
    for (const auto& h : hits) ids.push_back(h.id);
    return ids;
}

// ---------------------------------------------------------------------------

Verdict gradient_fidelity() {
    constexpr double tol = 1e-4;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    double worst = 0.0;
    std::size_t checked = 0;
    auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> ps) {
        const auto r = check_gradients(f, std::move(ps), 1e-5);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        v.require(r.max_rel_error < tol, name + " " + r.worst);
    };

    Rng rng(101);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 3, 4}, rng);
    auto row = random_tensor({4}, rng);
    auto w = random_tensor({2, 3, 4}, rng, false);
    check("add", [&] { return probe(add(a, row), w); }, {a, row});
    check("sub", [&] { return probe(sub(a, b), w); }, {a, b});
    check("mul", [&] { return probe(mul(a, row), w); }, {a, row});
    check("scale", [&] { return probe(scale(a, 1.7), w); }, {a});
    check("relu", [&] { return probe(relu(a), w); }, {a});
    check("abs", [&] { return probe(abs(a), w); }, {a});
    check("softmax", [&] { return probe(softmax(a, 2), w); }, {a});
    std::vector<std::uint8_t> keep(a.numel());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i % 4 != 2;
    check("masked_softmax", [&] { return probe(masked_softmax(a, keep), w); }, {a});
    auto gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng);
    check("layer_norm", [&] { return probe(layer_norm(a, gamma, beta), w); }, {a, gamma, beta});
    check("dropout", [&] {
        Rng fixed(3);
        return probe(dropout(a, 0.3, true, fixed), w);
    }, {a});

    auto m1 = random_tensor({3, 5}, rng), m2 = random_tensor({5, 2}, rng);
    auto wm = random_tensor({3, 2}, rng, false);
    check("matmul", [&] { return probe(matmul(m1, m2), wm); }, {m1, m2});
    auto lw = random_tensor({4, 5}, rng), lb = random_tensor({5}, rng);
    auto wl = random_tensor({2, 3, 5}, rng, false);
    check("linear", [&] { return probe(linear(a, lw, lb), wl); }, {a, lw, lb});

    auto x2 = random_tensor({2, 2, 5, 4}, rng), k2 = random_tensor({3, 2, 2, 3}, rng), b2 = random_tensor({3}, rng);
    Conv2dOptions opt;
    opt.stride_h = 2;
    opt.pad_w = 1;
    auto wc = random_tensor(conv2d(x2, k2, b2, opt).shape(), rng, false);
    check("conv2d", [&] { return probe(conv2d(x2, k2, b2, opt), wc); }, {x2, k2, b2});
    auto x1 = random_tensor({2, 3, 9}, rng), k1 = random_tensor({4, 3, 3}, rng), b1 = random_tensor({4}, rng);
    auto w1 = random_tensor(conv1d(x1, k1, b1, 1, 1, 2).shape(), rng, false);
    check("conv1d", [&] { return probe(conv1d(x1, k1, b1, 1, 1, 2), w1); }, {x1, k1, b1});

    auto wcat = random_tensor({2, 6, 4}, rng, false);
    check("concat", [&] { return probe(concat({a, b}, 1), wcat); }, {a, b});
    auto wp = random_tensor({4, 2, 3}, rng, false);
    check("permute", [&] { return probe(permute(a, {2, 0, 1}), wp); }, {a});
    auto wt = random_tensor({2, 4, 3}, rng, false);
    check("transpose", [&] { return probe(transpose(a, 1, 2), wt); }, {a});
    auto wr = random_tensor({6, 4}, rng, false);
    check("reshape", [&] { return probe(reshape(a, {6, 4}), wr); }, {a});
    auto ws = random_tensor({2, 2, 4}, rng, false);
    check("slice", [&] { return probe(slice(a, 1, 1, 2), ws); }, {a});
    auto wsum = random_tensor({2, 4}, rng, false);
    check("sum_axis", [&] { return probe(sum(a, 1), wsum); }, {a});
    check("mean_axis", [&] { return probe(mean(a, 1), wsum); }, {a});
    check("sum_mean", [&] { return add(sum(mul(a, a)), mean(b)); }, {a, b});

    // End-to-end model: N=3, L=4, D=4, with retrievals held fixed.
    ModelConfig cfg;
    cfg.num_nodes = 3;
    cfg.input_len = 4;
    cfg.output_len = 3;
    cfg.input_dim = 2;
    cfg.query_dim = 4;
    cfg.retrieval_dim = 4;
    cfg.n_heads = 2;
    cfg.generator_layers = 2;
    cfg.top_k = 3;
    cfg.mlp_ratio = 2.0;
    cfg.dropout = 0.0;
    cfg.attn_dropout = 0.0;
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (std::size_t i = 0; i < 3; ++i) edges.emplace_back(i, (i + 1) % 3, 1.0);
    RastModel model(cfg, GraphSpec::from_edges(3, edges), rng);
    RetrievalStore store(4, StorePolicy{}, 9);
    for (int i = 0; i < 10; ++i) {
        store.spatial.insert(normal_rows(1, 4, rng), 0);
        store.temporal.insert(normal_rows(1, 4, rng), 0);
    }
    store.spatial.build_index(IndexKind::Flat);
    store.temporal.build_index(IndexKind::Flat);
    auto x = random_tensor({2, 4, 3, 2}, rng, false);
    auto y = random_tensor({2, 3, 3, 1}, rng, false);
    const auto first = model.forward(x, &store, ForwardContext{});
    const auto rs = *first.spatial, rt = *first.temporal;
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (auto& p : model.parameters()) {
        params.push_back(p.tensor);
        names.push_back(p.name);
    }
    const auto r = check_gradients(
        [&] { return mean(abs(sub(model.forward_with(x, &rs, &rt, ForwardContext{}).prediction, y))); }, params,
        1e-5, 1e-3, names);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    v.require(r.max_rel_error < tol, "model " + r.worst);

    const double secs = seconds_since(t0);
    v.require(secs < 120.0, "suite took " + fmt("%.1f s", secs));
    v.note("max rel err " + fmt("%.3g", worst) + " over " + std::to_string(checked) + " entries, " +
           fmt("%.2f s", secs));
    return v;
}

Verdict retrieval_exactness() {
    Verdict v;
    Rng rng(202);
    auto rows = normal_rows(1000, 16, rng);
    // Duplicate a few rows so that ties occur.
    for (std::size_t i = 0; i < 10; ++i) std::copy_n(&rows[i * 16], 16, &rows[(500 + i) * 16]);
    auto bank = bank_of(rows, 16, 1);
    bank.build_index(IndexKind::Flat);
    std::size_t mismatches = 0, queries = 0;
    for (std::size_t k : {1u, 5u, 20u}) {
        for (int t = 0; t < 100; ++t) {
            std::vector<double> q = t % 10 == 0 ? std::vector<double>(&rows[t * 16], &rows[t * 16] + 16)
                                                : normal_rows(1, 16, rng);
            mismatches += ids_of(bank.search(q, k)) != brute_force(bank, q, k);
            ++queries;
        }
    }
    v.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
    v.note(std::to_string(queries) + " queries, " + std::to_string(mismatches) + " mismatches");
    return v;
}

Verdict ivf_quality() {
    Verdict v;
    Rng rng(303);
    const auto rows = gaussian_mixture(2000, 32, 10, rng);
    auto bank = bank_of(rows, 32, 5);
    bank.build_index(IndexKind::Ivf, 0);
    const auto n_list = bank.index().n_list;
    const auto n_probe = (n_list + 3) / 4;
    Rng qrng(303);
    std::vector<double> centers;
    gaussian_mixture(0, 32, 10, qrng, &centers);
    const auto queries = gaussian_mixture(200, 32, 10, qrng);
    std::size_t found = 0, total = 0;
    for (std::size_t t = 0; t < 200; ++t) {
        std::span<const double> q(&queries[t * 32], 32);
        const auto exact = ids_of(bank.search_exact(q, 5));
        const auto approx = ids_of(bank.search(q, 5, n_probe, false));
        for (auto id : exact) found += std::count(approx.begin(), approx.end(), id);
        total += exact.size();
    }
    const double recall = static_cast<double>(found) / static_cast<double>(total);
    v.require(recall >= 0.90, "recall@5 " + fmt("%.4f", recall));

    BenchOptions opt;
    opt.sizes = {1000, 8000};
    const auto bench = bench_store(opt);
    v.require(ratio_decreasing(bench), "IVF/Flat ratio did not decrease");
    v.note("recall@5 " + fmt("%.4f", recall) + " (n_list " + std::to_string(n_list) + ", n_probe " +
           std::to_string(n_probe) + "); ratio M=1000 " + fmt("%.3f", bench[0].ratio) + ", M=8000 " +
           fmt("%.3f", bench[1].ratio));
    return v;
}

Verdict store_policies() {
    Verdict v;
    Rng rng(404);
    StorePolicy policy;
    MemoryBank bank(BankTag::Temporal, 4, policy, 3);
    std::uniform_int_distribution<int> burst(1, 2500);
    std::size_t largest = 0;
    std::vector<double> last;
    for (int round = 0; round < 40; ++round) {
        const auto epoch = static_cast<std::uint32_t>(round);
        // Far-apart bursts, some larger than the capacity, mixed with
        // near-duplicates of the previous burst.
        auto rows = normal_rows(static_cast<std::size_t>(burst(rng)), 4, rng, 50.0);
        if (round % 3 == 2 && !last.empty()) rows.insert(rows.end(), last.begin(), last.end());
        bank.update_bank(rows, epoch);
        largest = std::max(largest, bank.size());
        last.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(rows.size(), 400)));
        if (!bank.empty()) {
            bank.build_index(IndexKind::Ivf, 0);
            for (int q = 0; q < 5; ++q) bank.update_momentum(bank.search(normal_rows(1, 4, rng, 50.0), 5));
        }
        bank.prune_and_decay(epoch, normal_rows(50, 4, rng, 50.0));
        largest = std::max(largest, bank.size());
    }
    v.require(largest <= 1000, "bank reached " + std::to_string(largest));

    MemoryBank aged(BankTag::Spatial, 2, policy, 1);
    for (std::uint32_t s : {0u, 49u, 50u, 69u, 70u, 71u, 120u}) aged.insert(std::vector<double>{0.0, 0.0}, s);
    aged.record_queries(std::vector<double>{0.0, 0.0});
    aged.prune_and_decay(120);
    std::size_t stale = 0;
    for (std::uint32_t i = 0; i < aged.size(); ++i) stale += 120 - aged.entry(i).epoch_stamp > 50;
    v.require(stale == 0 && aged.size() == 3, "after prune at 120: " + std::to_string(aged.size()) + " left, " +
                                                  std::to_string(stale) + " stale");

    auto mass_bank = bank_of(normal_rows(300, 8, rng), 8, 2);
    mass_bank.build_index(IndexKind::Flat);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        double before = 0.0, after = 0.0;
        for (std::uint32_t i = 0; i < mass_bank.size(); ++i) before += mass_bank.momentum(i);
        const auto k = 1 + static_cast<std::size_t>(t % 20);
        mass_bank.update_momentum(mass_bank.search(normal_rows(1, 8, rng), k));
        for (std::uint32_t i = 0; i < mass_bank.size(); ++i) after += mass_bank.momentum(i);
        worst = std::max(worst, std::abs(after - before - 1.0));
    }
    v.require(worst <= 1e-9, "momentum mass off by " + fmt("%.3g", worst));
    v.note("max size " + std::to_string(largest) + ", " + std::to_string(aged.size()) +
           " of 7 aged entries kept, mass err " + fmt("%.3g", worst));
    return v;
}

Verdict entropy_attention() {
    Verdict v;
    double worst_h = 0.0;
    for (std::size_t d : {2u, 4u, 16u}) {
        for (double level : {0.0, -3.5, 12.0}) {
            const std::vector<double> u(d, level);
            worst_h = std::max(worst_h, std::abs(entropy(u) - std::log(static_cast<double>(d))));
        }
    }
    v.require(worst_h <= 1e-9, "entropy err " + fmt("%.3g", worst_h));

    Rng rng(505);
    double worst_row = 0.0;
    std::size_t leaked = 0;
    std::uniform_int_distribution<std::size_t> ext(1, 6);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t r = ext(rng), tq = ext(rng), s = ext(rng), heads = trial % 2 ? 2 : 4;
        MultiHeadAttention attn(6, 8, 8, 8, heads, 0.0, rng);
        std::vector<std::uint8_t> keep(r * s);
        for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i % s == 0 || rng() % 2 == 0;
        const auto out = attn(random_tensor({r, tq, 6}, rng, false), random_tensor({r, s, 8}, rng, false),
                              random_tensor({r, s, 8}, rng, false), keep, ForwardContext{});
        const auto w = out.weights.data();
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t i = 0; i < tq; ++i) {
                    double total = 0.0;
                    for (std::size_t j = 0; j < s; ++j) {
                        const double x = w[((a * heads + h) * tq + i) * s + j];
                        if (!keep[a * s + j]) leaked += x != 0.0;
                        total += x;
                    }
                    worst_row = std::max(worst_row, std::abs(total - 1.0));
                }
    }
    v.require(worst_row <= 1e-9, "row sum err " + fmt("%.3g", worst_row));
    v.require(leaked == 0, std::to_string(leaked) + " masked slots got weight");
    v.note("entropy err " + fmt("%.3g", worst_h) + ", row sum err " + fmt("%.3g", worst_row));
    return v;
}

RunConfig desk_config(std::uint64_t seed) {
    RunConfig c;
    c.seed = seed;
    c.model.query_dim = 32;
    c.model.retrieval_dim = 16;
    c.model.n_heads = 4;
    c.train.cl_epochs = 0;
    return c;
}

Verdict overfit() {
    Verdict v;
    auto cfg = desk_config(42);
    cfg.model.dropout = 0.0;
    cfg.model.attn_dropout = 0.0;
    cfg.train.max_epochs = 200;
    cfg.train.patience = 200; // observe the whole trajectory
    const std::string source = "synthetic:sine:N=8,T=512";
    const auto data = load_dataset(source, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(cfg, data);
    const auto result = trainer.fit();
    const double secs = seconds_since(t0);

    std::vector<double> loss;
    for (const auto& h : result.history) loss.push_back(h.train_loss);
    std::size_t reached = loss.size();
    for (std::size_t e = 0; e < loss.size(); ++e) {
        if (loss[e] < 0.05) {
            reached = e;
            break;
        }
    }
    v.require(reached < loss.size(), "train MAE never below 0.05 (last " + fmt("%.4f", loss.back()) + ")");
    v.require(secs < 300.0, "took " + fmt("%.1f s", secs));

    // 10-epoch moving average, compared epoch by epoch.
    std::vector<double> ma;
    for (std::size_t e = 9; e < loss.size(); ++e) {
        double s = 0.0;
        for (std::size_t i = e - 9; i <= e; ++i) s += loss[i];
        ma.push_back(s / 10.0);
    }
    std::size_t rises = 0;
    double worst = 0.0;
    std::string where;
    for (std::size_t i = 1; i < ma.size(); ++i) {
        if (ma[i] > ma[i - 1]) {
            ++rises;
            if (ma[i] - ma[i - 1] > worst) {
                worst = ma[i] - ma[i - 1];
                where = std::to_string(i + 9);
            }
        }
    }
    v.require(rises == 0, std::to_string(rises) + " moving-average rises, largest " + fmt("%.3g", worst) +
                              " at epoch " + where);
    const double train_mae = evaluate_normalized_mae(trainer.model(), &trainer.store(), data, Split::Train, 32);
    v.note("below 0.05 at epoch " + std::to_string(reached) + ", final train MAE " + fmt("%.4f", loss.back()) +
           " (eval " + fmt("%.4f", train_mae) + "), " + fmt("%.1f s", secs));
    return v;
}

double median3(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    return x[1];
}

Verdict ablation() {
    Verdict v;
    const std::string source = "synthetic:regime-switch:N=8,T=512";
    std::vector<double> full, query_only;
    std::string log;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (auto mode : {OutputType::Full, OutputType::QueryOnly}) {
            auto cfg = desk_config(seed);
            cfg.train.max_epochs = 60;
            cfg.model.output_type = mode;
            const auto data = load_dataset(source, cfg);
            Trainer trainer(cfg, data);
            const auto r = trainer.fit();
            const double mae = r.test.row("avg").mae;
            (mode == OutputType::Full ? full : query_only).push_back(mae);
            std::printf("  ablation seed %llu %-10s test MAE %.6f (best epoch %zu)\n",
                        static_cast<unsigned long long>(seed), to_string(mode).c_str(), mae, r.best_epoch);
        }
    }
    const double mf = median3(full), mq = median3(query_only);
    v.require(mf < mq, "median full " + fmt("%.6f", mf) + " >= query_only " + fmt("%.6f", mq));
    v.note("median test MAE full " + fmt("%.6f", mf) + " vs query_only " + fmt("%.6f", mq));
    return v;
}

Verdict metric_conformance() {
    Verdict v;
    double worst = 0.0;
    auto near = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

    const auto one = metric_row(std::vector<double>{1.0}, std::vector<double>{2.0}, 0.0);
    near(one.mae, 1.0);
    near(one.rmse, 1.0);
    near(one.mape, 49.99975000125);

    // 2 samples x 12 steps x 2 series; nulls planted at fixed positions.
    const std::size_t S = 2, H = 12, N = 2;
    std::vector<double> y(S * H * N), p(S * H * N);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t n = 0; n < N; ++n) {
                const std::size_t i = (s * H + h) * N + n;
                y[i] = 1.0 + static_cast<double>(h) + 0.5 * static_cast<double>(n) + 3.0 * static_cast<double>(s);
                p[i] = y[i] + ((i % 3) == 0 ? 0.75 : -0.25 * static_cast<double>(n + 1));
            }
    for (std::size_t i : {3u, 17u, 30u, 47u}) y[i] = 0.0;
    const auto m = compute_metrics(p, y, S, H, N, 0.0);

    auto oracle = [&](std::size_t from, std::size_t to, double& mae, double& rmse, double& mape) {
        double a = 0.0, sq = 0.0, pc = 0.0, c = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t h = from; h < to; ++h)
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t i = (s * H + h) * N + n;
                    if (y[i] == 0.0) continue;
                    const double e = std::abs(y[i] - p[i]);
                    a += e;
                    sq += e * e;
                    pc += e / (y[i] + 1e-5);
                    c += 1.0;
                }
        mae = a / c;
        rmse = std::sqrt(sq / c);
        mape = 100.0 * pc / c;
    };
    for (auto [name, from, to] : {std::tuple{"h3", 2u, 3u}, {"h6", 5u, 6u}, {"h12", 11u, 12u}, {"avg", 0u, 12u}}) {
        double mae, rmse, mape;
        oracle(from, to, mae, rmse, mape);
        const auto& r = m.row(name);
        near(r.mae, mae);
        near(r.rmse, rmse);
        near(r.mape, mape);
    }
    v.require(worst <= 1e-9, "max deviation " + fmt("%.3g", worst));
    v.note("max deviation " + fmt("%.3g", worst));
    return v;
}

RunConfig tiny_config(std::size_t epochs) {
    RunConfig c;
    c.seed = 11;
    c.model.query_dim = 8;
    c.model.retrieval_dim = 8;
    c.model.n_heads = 2;
    c.model.generator_layers = 1;
    c.model.mlp_ratio = 1.0;
    c.model.top_k = 3;
    c.train.batch_size = 16;
    c.train.max_epochs = epochs;
    c.train.warm_epochs = 2;
    c.train.cl_epochs = 1;
    c.train.patience = 100;
    c.store.update_sample = 64;
    return c;
}

bool same_report(const MetricsReport& a, const MetricsReport& b) {
    if (a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].mae != b.rows[i].mae || a.rows[i].rmse != b.rows[i].rmse || a.rows[i].mape != b.rows[i].mape)
            return false;
    }
    return true;
}

Verdict determinism() {
    Verdict v;
    const std::string source = "synthetic:regime-switch:N=4,T=240";
    const auto cfg = tiny_config(21);
    const auto data = load_dataset(source, cfg);
    Trainer a(cfg, data), b(cfg, data);
    const auto dir = std::filesystem::temp_directory_path() / "rast_acceptance_ckpt";
    std::filesystem::remove_all(dir);
    const auto ra = a.fit({dir, source, {}, {}});
    const auto rb = b.fit();
    double diff = ra.history.size() == rb.history.size() ? 0.0 : 1e300;
    for (std::size_t i = 0; i < std::min(ra.history.size(), rb.history.size()); ++i)
        diff = std::max(diff, std::abs(ra.history[i].train_loss - rb.history[i].train_loss));
    v.require(diff <= 1e-12, "trajectories differ by " + fmt("%.3g", diff));

    const auto run = load_checkpoint(dir);
    const auto again = evaluate(*run.model, run.store.get(), run.data, Split::Test, cfg.train.batch_size);
    v.require(same_report(again, ra.test), "checkpoint metrics differ");

    const auto snap = dir / "spatial_copy.bank";
    a.store().spatial.save(snap);
    const auto loaded = MemoryBank::load(snap, cfg.store, store_seed(cfg));
    v.require(loaded.same_content(a.store().spatial), "bank snapshot content differs");
    RetrievalStore swapped(cfg.model.retrieval_dim, cfg.store, store_seed(cfg));
    swapped.spatial = loaded;
    swapped.temporal = MemoryBank::load(dir / "temporal.bank", cfg.store, store_seed(cfg) + 1);
    const auto via_snap = evaluate(a.model(), &swapped, data, Split::Test, cfg.train.batch_size);
    v.require(same_report(via_snap, ra.test), "bank snapshot metrics differ");
    v.note("trajectory diff " + fmt("%.3g", diff) + " over " + std::to_string(ra.history.size()) +
           " epochs; checkpoint and snapshot metrics bitwise equal");
    return v;
}

Verdict schedule() {
    Verdict v;
    const TrainConfig t;
    const std::vector<std::size_t> milestones{1, 30, 38, 46, 54, 62, 70, 80};
    std::size_t off = 0;
    for (std::size_t e = 0; e <= 100; ++e) {
        double want = 0.002;
        for (auto m : milestones)
            if (m <= e) want *= 0.5;
        off += lr_schedule(e, t) != want;
    }
    v.require(off == 0, std::to_string(off) + " lr values differ");

    const auto cfg = tiny_config(35);
    const auto data = load_dataset("synthetic:sine:N=3,T=200", cfg);
    Trainer trainer(cfg, data);
    const auto r = trainer.fit();
    std::set<std::size_t> spatial, temporal;
    for (const auto& e : r.events) (e.bank == "spatial" ? spatial : temporal).insert(e.epoch);
    const std::set<std::size_t> want{9, 19, 29};
    v.require(spatial == want && temporal == want && r.events.size() == 6, "rebuild epochs differ");
    v.require(trainer.store().spatial.rebuild_count() == 3, "spatial rebuilds " +
                                                                std::to_string(trainer.store().spatial.rebuild_count()));
    v.note("lr table exact over 0-100; rebuilds at epochs 9, 19, 29 in 35 epochs");
    return v;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
        {"gradient fidelity", gradient_fidelity}, {"retrieval exactness", retrieval_exactness},
        {"IVF quality", ivf_quality},             {"store policies", store_policies},
        {"entropy/attention", entropy_attention}, {"overfit", overfit},
        {"ablation direction", ablation},         {"metric conformance", metric_conformance},
        {"determinism/persistence", determinism}, {"schedule conformance", schedule},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(id)) continue;
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        failed += !v.pass;
        std::printf("criterion %2d %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
