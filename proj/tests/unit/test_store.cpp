#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "rast/errors.hpp"
#include "rast/store.hpp"

using namespace rast;

namespace {

std::vector<double> random_rows(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n * d);
    for (auto& x : v) x = g(rng);
    return v;
}

// Rows drawn around `clusters` well separated centres; labels returned alongside.
std::vector<double> mixture(std::size_t n, std::size_t d, std::size_t clusters, Rng& rng,
                            std::vector<std::size_t>* labels = nullptr, double spread = 1.0, double sep = 10.0) {
    auto centres = random_rows(clusters, d, rng, sep);
    std::normal_distribution<double> g(0.0, spread);
    std::vector<double> v(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % clusters;
        if (labels) labels->push_back(c);
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] = centres[c * d + j] + g(rng);
    }
    return v;
}

MemoryBank bank_from(const std::vector<double>& rows, std::size_t d, StorePolicy policy = {}) {
    policy.capacity = std::max(policy.capacity, rows.size() / d);
    MemoryBank bank(BankTag::Spatial, d, policy, 7);
    for (std::size_t i = 0; i < rows.size() / d; ++i) bank.insert(std::span(rows).subspan(i * d, d), 0);
    return bank;
}

// Independent oracle: full sort of all (similarity, id) pairs computed from scratch.
std::vector<std::uint32_t> brute_force_topk(const MemoryBank& bank, std::span<const double> q, std::size_t k) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < bank.size(); ++i) {
        auto v = bank.vector(i);
        double s = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) s += (q[d] - v[d]) * (q[d] - v[d]);
        all.emplace_back(-s, i);
    }
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::uint32_t> ids;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].second);
    return ids;
}

std::vector<std::uint32_t> ids_of(const std::vector<SearchHit>& hits) {
    std::vector<std::uint32_t> ids;
    for (const auto& h : hits) ids.push_back(h.id);
    return ids;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("rast_test_" + name);
}

} // namespace

TEST_CASE("similarity is negated squared distance") {
    std::vector<double> a{1, 0}, b{0, 1};
    CHECK(similarity(a, a) == 0.0);
    CHECK(similarity(a, b) == -2.0);
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        auto q = random_rows(1, 37, rng), v = random_rows(1, 37, rng);
        double direct = 0.0;
        for (std::size_t i = 0; i < 37; ++i) direct += (q[i] - v[i]) * (q[i] - v[i]);
        CHECK(std::abs(similarity(q, v) + direct) < 1e-12);
        CHECK(similarity(q, v) <= 0.0);
    }
    CHECK_THROWS_AS(similarity(std::vector<double>{1, 2}, std::vector<double>{1}), ShapeError);
}

TEST_CASE("entropy of softmax") {
    for (std::size_t d : {2u, 4u, 16u}) {
        std::vector<double> u(d, 3.7);
        CHECK(std::abs(entropy(u) - std::log(static_cast<double>(d))) < 1e-9);
    }
    CHECK(entropy(std::vector<double>{5.0}) == 0.0);

    std::vector<double> v{10, 0, 0, 0};
    double z = std::exp(10.0) + 3.0, direct = 0.0;
    for (double x : v) {
        const double p = std::exp(x) / z;
        direct -= p * std::log(p);
    }
    CHECK(entropy(v) == doctest::Approx(direct).epsilon(1e-10));
    CHECK(entropy(v) == doctest::Approx(4.12e-4).epsilon(0.01));

    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        auto r = random_rows(1, 8, rng, 3.0);
        CHECK(entropy(r) >= 0.0);
        CHECK(entropy(r) <= std::log(8.0) + 1e-12);
    }
}

TEST_CASE("momentum shares") {
    auto one = momentum_shares(std::vector<double>{-3.0}, std::vector<double>{0.2}, 0.5, 0.1);
    CHECK(one == std::vector<double>{1.0});

    auto sym = momentum_shares(std::vector<double>{-1.0, -1.0}, std::vector<double>{0.3, 0.3}, 0.5, 0.1);
    CHECK(sym[0] == doctest::Approx(0.5));
    CHECK(sym[1] == doctest::Approx(0.5));

    auto mono = momentum_shares(std::vector<double>{-1.0, -1.0}, std::vector<double>{0.9, 0.1}, 0.5, 0.1);
    CHECK(mono[0] > mono[1]);

    CHECK_THROWS_AS(momentum_shares(std::vector<double>{0.0}, std::vector<double>{0.0}, 0.5, 0.0), ConfigError);
    CHECK_THROWS_AS(momentum_shares(std::vector<double>{0.0}, std::vector<double>{0.0}, 0.5, -1.0), ConfigError);
}

TEST_CASE("momentum mass per query is conserved") {
    Rng rng(3);
    auto rows = random_rows(200, 8, rng);
    auto bank = bank_from(rows, 8);
    bank.build_index(IndexKind::Flat);
    for (int t = 0; t < 100; ++t) {
        auto q = random_rows(1, 8, rng);
        const std::size_t k = 1 + static_cast<std::size_t>(t % 20);
        double before = 0.0, after = 0.0;
        for (std::uint32_t i = 0; i < bank.size(); ++i) before += bank.momentum(i);
        auto hits = bank.search(q, k);
        const double added = bank.update_momentum(hits);
        for (std::uint32_t i = 0; i < bank.size(); ++i) after += bank.momentum(i);
        CHECK(std::abs(added - 1.0) < 1e-9);
        CHECK(std::abs((after - before) - 1.0) < 1e-9);
    }
}

TEST_CASE("singleton retrieval adds exactly one") {
    MemoryBank bank(BankTag::Temporal, 2);
    bank.insert(std::vector<double>{1.0, 2.0}, 0);
    bank.build_index(IndexKind::Flat);
    auto hits = bank.search(std::vector<double>{0.0, 0.0}, 1);
    bank.update_momentum(hits);
    CHECK(bank.momentum(0) == 2.0);
}

TEST_CASE("insertion stats match the vector") {
    Rng rng(4);
    MemoryBank bank(BankTag::Spatial, 16);
    auto v = random_rows(1, 16, rng);
    bank.insert(v, 3);
    auto e = bank.entry(0);
    double mean = 0.0, var = 0.0;
    for (float x : e.vector) mean += x;
    mean /= 16.0;
    for (float x : e.vector) var += (x - mean) * (x - mean);
    var /= 16.0;
    CHECK(std::abs(e.mean - mean) < 1e-9);
    CHECK(std::abs(e.variance - var) < 1e-9);
    CHECK(e.momentum == 1.0);
    CHECK(e.epoch_stamp == 3);
    CHECK(e.insert_count == 1);
}

TEST_CASE("flat index on one entry") {
    MemoryBank bank(BankTag::Spatial, 3);
    bank.insert(std::vector<double>{1, 2, 3}, 0);
    auto out = bank.build_index(IndexKind::Flat);
    CHECK(out.kind == IndexKind::Flat);
    REQUIRE(bank.index().lists.size() == 1);
    CHECK(bank.index().lists[0] == std::vector<std::uint32_t>{0});
}

TEST_CASE("ivf separates two clusters exactly") {
    Rng rng(5);
    std::vector<std::size_t> labels;
    auto rows = mixture(100, 8, 2, rng, &labels, 1.0, 20.0);
    auto bank = bank_from(rows, 8);
    auto out = bank.build_index(IndexKind::Ivf, 2);
    REQUIRE(out.kind == IndexKind::Ivf);
    const auto& idx = bank.index();
    // Oracle: brute-force nearest centroid for every vector.
    for (std::size_t list = 0; list < 2; ++list) {
        std::set<std::size_t> cluster_labels;
        for (auto id : idx.lists[list]) {
            cluster_labels.insert(labels[id]);
            auto v = bank.vector(id);
            double d0 = 0, d1 = 0;
            for (std::size_t j = 0; j < 8; ++j) {
                d0 += (v[j] - idx.centroids[j]) * (v[j] - idx.centroids[j]);
                d1 += (v[j] - idx.centroids[8 + j]) * (v[j] - idx.centroids[8 + j]);
            }
            CHECK((d0 < d1 ? 0u : 1u) == list);
        }
        CHECK(cluster_labels.size() == 1);
        CHECK(idx.lists[list].size() == 50);
    }
}

TEST_CASE("ivf rebuild is deterministic and partitions all ids") {
    Rng rng(6);
    auto rows = mixture(500, 16, 5, rng);
    auto bank = bank_from(rows, 16);
    bank.build_index(IndexKind::Ivf, 0);
    auto first = bank.index().lists;
    const auto gen = bank.generation();
    bank.build_index(IndexKind::Ivf, 0);
    CHECK(bank.index().lists == first);
    CHECK(bank.generation() > gen);

    CHECK(bank.index().n_list == 23); // ceil(sqrt(500))
    CHECK(bank.index().n_probe == 6); // ceil(23 / 4)
    std::vector<int> seen(500, 0);
    for (const auto& l : bank.index().lists)
        for (auto id : l) ++seen[id];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(bank.index().n_list <= bank.size());
}

TEST_CASE("ivf with more lists than entries downgrades to flat") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{0, 0}, 0);
    bank.insert(std::vector<double>{1, 1}, 0);
    auto out = bank.build_index(IndexKind::Ivf, 5);
    CHECK(out.downgraded);
    CHECK(out.kind == IndexKind::Flat);
    CHECK_FALSE(out.warning.empty());

    MemoryBank empty(BankTag::Spatial, 2);
    CHECK(empty.build_index(IndexKind::Ivf, 0).downgraded);
    CHECK(empty.search(std::vector<double>{0, 0}, 3).empty());
}

TEST_CASE("search hand example and exhaustive case") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{0, 0}, 0);
    bank.insert(std::vector<double>{1, 0}, 0);
    bank.insert(std::vector<double>{0, 2}, 0);
    bank.build_index(IndexKind::Flat);
    auto hits = bank.search(std::vector<double>{0.9, 0.0}, 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].id == 1);
    CHECK(hits[1].id == 0);
    CHECK(hits[0].similarity == doctest::Approx(-0.01).epsilon(1e-9));
    CHECK(hits[1].similarity == doctest::Approx(-0.81).epsilon(1e-9));

    auto all = bank.search(std::vector<double>{0.9, 0.0}, 10);
    CHECK(ids_of(all) == std::vector<std::uint32_t>{1, 0, 2});
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].similarity >= all[i].similarity);
}

TEST_CASE("search ties go to the lower id") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{1, 0}, 0);
    bank.insert(std::vector<double>{0, 1}, 0);
    bank.insert(std::vector<double>{-1, 0}, 0);
    bank.insert(std::vector<double>{1, 0}, 0);
    bank.build_index(IndexKind::Flat);
    CHECK(ids_of(bank.search(std::vector<double>{0, 0}, 4)) == std::vector<std::uint32_t>{0, 1, 2, 3});
    CHECK(ids_of(bank.search(std::vector<double>{1, 0}, 2)) == std::vector<std::uint32_t>{0, 3});
}

TEST_CASE("flat search matches brute force exactly") {
    Rng rng(7);
    auto rows = random_rows(1000, 16, rng);
    auto bank = bank_from(rows, 16);
    bank.build_index(IndexKind::Flat);
    std::size_t mismatches = 0;
    for (std::size_t k : {1u, 5u, 20u}) {
        for (int t = 0; t < 100; ++t) {
            auto q = random_rows(1, 16, rng);
            if (ids_of(bank.search(q, k)) != brute_force_topk(bank, q, k)) ++mismatches;
        }
    }
    CHECK(mismatches == 0);
}

TEST_CASE("ivf recall on a ten cluster mixture") {
    Rng rng(8);
    auto rows = mixture(2000, 32, 10, rng);
    auto bank = bank_from(rows, 32);
    bank.build_index(IndexKind::Ivf, 0);
    auto queries = mixture(200, 32, 10, rng);
    std::size_t found = 0, total = 0;
    for (std::size_t t = 0; t < 200; ++t) {
        std::span<const double> q(&queries[t * 32], 32);
        auto exact = ids_of(bank.search_exact(q, 5));
        auto approx = ids_of(bank.search(q, 5, 0, false));
        for (auto id : exact) found += std::count(approx.begin(), approx.end(), id);
        total += exact.size();
    }
    const double recall = static_cast<double>(found) / static_cast<double>(total);
    INFO("recall@5 = " << recall);
    CHECK(recall >= 0.9);
}

TEST_CASE("ivf widens the probe when lists are under-filled") {
    Rng rng(9);
    auto rows = mixture(64, 4, 8, rng);
    auto bank = bank_from(rows, 4);
    bank.build_index(IndexKind::Ivf, 8);
    auto q = random_rows(1, 4, rng);
    CHECK(bank.search(q, 40, 1, false).size() == 40);
}

TEST_CASE("cache never serves results across generations") {
    Rng rng(10);
    auto rows = random_rows(300, 8, rng);
    auto bank = bank_from(rows, 8);
    bank.build_index(IndexKind::Ivf, 0);
    auto queries = random_rows(10, 8, rng);
    std::uniform_int_distribution<int> action(0, 9);
    for (int step = 0; step < 400; ++step) {
        const int a = action(rng);
        if (a == 0) {
            bank.build_index(IndexKind::Ivf, 0);
        } else if (a == 1) {
            bank.insert(random_rows(1, 8, rng), 0);
        } else if (a == 2 && bank.size() > 10) {
            // Shift an entry next to a query so a stale answer would be visible.
            bank.blend(static_cast<std::uint32_t>(step % bank.size()), std::span(queries).subspan(0, 8), 1.0, 0);
            bank.build_index(IndexKind::Flat);
        } else {
            std::span<const double> q(&queries[static_cast<std::size_t>(step % 10) * 8], 8);
            auto cached = bank.search(q, 5);
            auto fresh = bank.search(q, 5, 0, false);
            CHECK(ids_of(cached) == ids_of(fresh));
        }
    }
    CHECK(bank.cache_hits() > 0);
}

TEST_CASE("update_bank cold start inserts verbatim") {
    MemoryBank bank(BankTag::Spatial, 2);
    std::vector<double> fresh{0, 0, 10, 10, -10, 5};
    auto rep = bank.update_bank(fresh, 4);
    CHECK(rep.inserted == 3);
    CHECK(rep.blended == 0);
    REQUIRE(bank.size() == 3);
    for (std::uint32_t i = 0; i < 3; ++i) {
        CHECK(bank.momentum(i) == 1.0);
        CHECK(bank.entry(i).epoch_stamp == 4);
        CHECK(bank.vector(i)[0] == static_cast<float>(fresh[i * 2]));
        CHECK(bank.vector(i)[1] == static_cast<float>(fresh[i * 2 + 1]));
    }
}

TEST_CASE("blend arithmetic") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{1, 1}, 0);
    bank.blend(0, std::vector<double>{5, 1}, 0.25, 7);
    CHECK(bank.vector(0)[0] == 2.0f);
    CHECK(bank.vector(0)[1] == 1.0f);
    CHECK(bank.entry(0).epoch_stamp == 7);
    CHECK(bank.entry(0).insert_count == 2);
    bank.blend(0, std::vector<double>{-3, 4}, 1.0, 8);
    CHECK(bank.vector(0)[0] == -3.0f);
    CHECK(bank.vector(0)[1] == 4.0f);
    CHECK_THROWS_AS(bank.blend(0, std::vector<double>{0, 0}, 1.5, 8), ContractError);
    CHECK_THROWS_AS(bank.blend(0, std::vector<double>{0}, 0.5, 8), ShapeError);
}

TEST_CASE("update_bank blends near matches with the similarity rate") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{0, 0}, 0);
    // s = -0.25 -> exp(s) = 0.78 >= 0.5; rate = sigmoid(-0.25) = 0.4378
    auto rep = bank.update_bank(std::vector<double>{0.5, 0.0}, 2);
    CHECK(rep.blended == 1);
    REQUIRE(bank.size() == 1);
    const double rate = 1.0 / (1.0 + std::exp(0.25));
    CHECK(bank.vector(0)[0] == doctest::Approx(0.5 * rate).epsilon(1e-6));
    // s = -4 -> exp(s) < 0.5: inserted as a new entry
    rep = bank.update_bank(std::vector<double>{2.0, 0.0}, 2);
    CHECK(rep.inserted == 1);
    CHECK(bank.size() == 2);
}

TEST_CASE("repeated blending contracts geometrically") {
    MemoryBank bank(BankTag::Spatial, 3);
    bank.insert(std::vector<double>{4, -2, 1}, 0);
    const std::vector<double> target{0, 1, 2};
    const double rate = 0.3;
    auto gap = [&] {
        double g = 0;
        for (std::size_t d = 0; d < 3; ++d) g += std::pow(bank.vector(0)[d] - target[d], 2);
        return std::sqrt(g);
    };
    double prev = gap();
    for (int step = 0; step < 15; ++step) {
        bank.blend(0, target, rate, 0);
        const double now = gap();
        CHECK(now / prev == doctest::Approx(1.0 - rate).epsilon(1e-4));
        prev = now;
    }
}

TEST_CASE("capacity bound holds under adversarial inserts") {
    StorePolicy policy;
    Rng rng(11);
    MemoryBank bank(BankTag::Temporal, 4, policy, 3);
    std::uniform_int_distribution<int> burst(1, 400);
    for (int round = 0; round < 30; ++round) {
        // Far apart rows so nothing blends; momentum skewed toward old entries.
        auto rows = random_rows(static_cast<std::size_t>(burst(rng)), 4, rng, 50.0);
        bank.update_bank(rows, static_cast<std::uint32_t>(round));
        CHECK(bank.size() <= 1000);
        if (!bank.empty()) {
            bank.build_index(IndexKind::Ivf, 0);
            for (int q = 0; q < 5; ++q) bank.update_momentum(bank.search(random_rows(1, 4, rng, 50.0), 5));
        }
        CHECK(bank.size() <= 1000);
    }
}

TEST_CASE("update_bank evicts the lowest momentum entries") {
    StorePolicy policy;
    policy.capacity = 1000;
    MemoryBank bank(BankTag::Spatial, 1, policy);
    std::vector<double> rows(1200);
    for (std::size_t i = 0; i < 1200; ++i) rows[i] = static_cast<double>(i) * 10.0;
    bank.update_bank(std::span(rows).subspan(0, 1000), 0);
    for (std::uint32_t i = 0; i < 1000; ++i) {
        std::vector<SearchHit> hit{{i, 0.0, 0.0}};
        bank.update_momentum(hit); // every old entry gets momentum 2
    }
    auto rep = bank.update_bank(std::span(rows).subspan(1000), 0);
    CHECK(rep.inserted == 200);
    CHECK(rep.evicted == 200);
    CHECK(bank.size() == 1000);
    for (std::uint32_t i = 0; i < 1000; ++i) CHECK(bank.momentum(i) == 2.0);
}

TEST_CASE("prune keeps fresh relevant entries") {
    MemoryBank bank(BankTag::Spatial, 2);
    std::vector<double> rows{0, 0, 1, 1, 2, 2};
    for (std::size_t i = 0; i < 3; ++i) bank.insert(std::span(rows).subspan(i * 2, 2), 100);
    bank.record_queries(rows);
    auto rep = bank.prune_and_decay(105);
    CHECK(rep.evicted.empty());
    CHECK(bank.size() == 3);
}

TEST_CASE("prune decays entries older than fifty epochs") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{0, 0}, 60);
    bank.insert(std::vector<double>{1, 0}, 70);
    bank.insert(std::vector<double>{2, 0}, 110);
    auto rep = bank.prune_and_decay(120);
    REQUIRE(rep.evicted.size() == 1);
    CHECK(rep.evicted[0].id == 0);
    CHECK(rep.evicted[0].reason == "decay");
    REQUIRE(bank.size() == 2);
    for (std::uint32_t i = 0; i < bank.size(); ++i) CHECK(120 - bank.entry(i).epoch_stamp <= 50);
}

TEST_CASE("prune drops entries far from recent queries") {
    MemoryBank bank(BankTag::Spatial, 2);
    bank.insert(std::vector<double>{0, 0}, 0);
    bank.insert(std::vector<double>{5, 5}, 0);
    bank.insert(std::vector<double>{0.5, 0.5}, 0);
    bank.record_queries(std::vector<double>{0.1, 0.0});
    // exp(-0.01) and exp(-0.41) pass 0.3; exp(-49.01) fails.
    auto rep = bank.prune_and_decay(1);
    CHECK(rep.count("similarity") == 1);
    CHECK(rep.evicted[0].id == 1);
    CHECK(bank.size() == 2);
    CHECK(bank.recorded_queries() == 0);
}

TEST_CASE("prune truncates to capacity by ascending momentum") {
    StorePolicy policy;
    policy.capacity = 1200; // let the bank overfill, then tighten
    MemoryBank big(BankTag::Spatial, 1, policy);
    std::vector<double> rows(1200);
    for (std::size_t i = 0; i < 1200; ++i) rows[i] = static_cast<double>(i) * 10.0;
    big.update_bank(rows, 0);
    REQUIRE(big.size() == 1200);
    // Momentum ordered so that the 200 lowest are ids 1000..1199.
    for (std::uint32_t i = 0; i < 1000; ++i) big.update_momentum({{i, 0.0, 0.0}});

    StorePolicy tight;
    const auto path = temp_path("capacity.bank");
    big.save(path);
    auto bank = MemoryBank::load(path, tight);
    std::filesystem::remove(path);
    auto rep = bank.prune_and_decay(0);
    CHECK(rep.count("capacity") == 200);
    CHECK(bank.size() == 1000);
    for (const auto& e : rep.evicted) CHECK(e.id >= 1000);
}

TEST_CASE("snapshot round trip") {
    Rng rng(12);
    MemoryBank bank(BankTag::Temporal, 5);
    bank.update_bank(random_rows(40, 5, rng, 4.0), 9);
    bank.build_index(IndexKind::Flat);
    for (int i = 0; i < 10; ++i) bank.update_momentum(bank.search(random_rows(1, 5, rng), 3));
    const auto path = temp_path("roundtrip.bank");
    bank.save(path);
    auto loaded = MemoryBank::load(path);
    CHECK(loaded.same_content(bank));
    CHECK(loaded.tag() == BankTag::Temporal);
    CHECK(loaded.index().built);
    for (std::uint32_t i = 0; i < bank.size(); ++i) {
        auto a = bank.entry(i), b = loaded.entry(i);
        CHECK(a.vector == b.vector);
        CHECK(a.momentum == b.momentum);
        CHECK(a.epoch_stamp == b.epoch_stamp);
        CHECK(a.insert_count == b.insert_count);
    }
    std::filesystem::remove(path);
}

TEST_CASE("snapshot of an empty bank") {
    MemoryBank bank(BankTag::Spatial, 3);
    const auto path = temp_path("empty.bank");
    bank.save(path);
    CHECK(std::filesystem::file_size(path) == 8 + 2 + 1 + 4 + 4 + 4);
    auto loaded = MemoryBank::load(path);
    CHECK(loaded.empty());
    CHECK(loaded.dim() == 3);
    std::filesystem::remove(path);
}

TEST_CASE("snapshot format errors carry offsets") {
    Rng rng(13);
    MemoryBank bank(BankTag::Spatial, 4);
    bank.update_bank(random_rows(10, 4, rng, 5.0), 1);
    const auto path = temp_path("bad.bank");
    bank.save(path);
    std::vector<char> bytes(std::filesystem::file_size(path));
    {
        std::ifstream in(path, std::ios::binary);
        in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    auto write = [&](const std::vector<char>& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    write(std::vector<char>(bytes.begin(), bytes.begin() + 60));
    try {
        MemoryBank::load(path);
        FAIL("truncated snapshot loaded");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 60);
    }

    auto version = bytes;
    version[8] = 9;
    write(version);
    try {
        MemoryBank::load(path);
        FAIL("wrong version loaded");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 8);
    }

    auto corrupt = bytes;
    corrupt[30] ^= 0x10;
    write(corrupt);
    CHECK_THROWS_AS(MemoryBank::load(path), FormatError);

    auto magic = bytes;
    magic[0] = 'X';
    write(magic);
    CHECK_THROWS_AS(MemoryBank::load(path), FormatError);
    std::filesystem::remove(path);
}
