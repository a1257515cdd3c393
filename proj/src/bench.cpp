#include "rast/bench.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "rast/store.hpp"

namespace rast {

std::vector<double> gaussian_mixture(std::size_t count, std::size_t dim, std::size_t clusters, Rng& rng,
                                     std::vector<double>* centers) {
    std::uniform_real_distribution<double> unif(-10.0, 10.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> c(clusters * dim);
    for (auto& v : c) v = unif(rng);
    std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
    std::vector<double> out(count * dim);
    for (std::size_t i = 0; i < count; ++i) {
        const auto k = pick(rng);
        for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = c[k * dim + j] + gauss(rng);
    }
    if (centers) *centers = std::move(c);
    return out;
}

namespace {

double mean_query_us(const MemoryBank& bank, const std::vector<double>& queries, std::size_t dim, std::size_t k) {
    const std::size_t n = queries.size() / dim;
    volatile std::size_t sink = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t q = 0; q < n; ++q) {
        sink = sink + bank.search(std::span(queries).subspan(q * dim, dim), k, 0, false).size();
    }
    const auto us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return us / static_cast<double>(n);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace

std::vector<BenchRow> bench_store(const BenchOptions& o) {
    std::vector<BenchRow> rows;
    for (auto size : o.sizes) {
        Rng rng(o.seed);
        std::vector<double> centers;
        const auto data = gaussian_mixture(size, o.dim, o.clusters, rng, &centers);
        // Queries come from the same mixture components.
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick(0, o.clusters - 1);
        std::vector<double> queries(o.queries * o.dim);
        for (std::size_t q = 0; q < o.queries; ++q) {
            const auto c = pick(rng);
            for (std::size_t j = 0; j < o.dim; ++j) queries[q * o.dim + j] = centers[c * o.dim + j] + gauss(rng);
        }

        StorePolicy policy;
        policy.capacity = std::max(policy.capacity, size);
        MemoryBank flat(BankTag::Spatial, o.dim, policy, o.seed);
        for (std::size_t i = 0; i < size; ++i) flat.insert(std::span(data).subspan(i * o.dim, o.dim), 0);
        MemoryBank ivf = flat;
        flat.build_index(IndexKind::Flat);
        ivf.build_index(IndexKind::Ivf);

        BenchRow row;
        row.size = size;
        row.n_list = ivf.index().n_list;
        row.n_probe = ivf.index().n_probe;
        double found = 0.0, wanted = 0.0;
        for (std::size_t q = 0; q < o.queries; ++q) {
            const auto qs = std::span(queries).subspan(q * o.dim, o.dim);
            const auto a = flat.search(qs, o.k, 0, false);
            const auto b = ivf.search(qs, o.k, 0, false);
            row.returned = a.size();
            for (const auto& h : a) {
                wanted += 1.0;
                found += std::any_of(b.begin(), b.end(), [&](const SearchHit& x) { return x.id == h.id; }) ? 1.0 : 0.0;
            }
        }
        row.recall = wanted > 0.0 ? found / wanted : 1.0;

        std::vector<double> flat_t, ivf_t;
        mean_query_us(flat, queries, o.dim, o.k);
        mean_query_us(ivf, queries, o.dim, o.k);
        for (std::size_t r = 0; r < std::max<std::size_t>(1, o.repeats); ++r) {
            flat_t.push_back(mean_query_us(flat, queries, o.dim, o.k));
            ivf_t.push_back(mean_query_us(ivf, queries, o.dim, o.k));
        }
        row.flat_us = median(flat_t);
        row.ivf_us = median(ivf_t);
        row.ratio = row.flat_us > 0.0 ? row.ivf_us / row.flat_us : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << "size,n_list,n_probe,flat_us,ivf_us,ratio,recall,returned\n";
    for (const auto& r : rows) {
        out << r.size << ',' << r.n_list << ',' << r.n_probe << ',' << r.flat_us << ',' << r.ivf_us << ','
            << r.ratio << ',' << r.recall << ',' << r.returned << '\n';
    }
    return out.str();
}

bool ratio_decreasing(const std::vector<BenchRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!(rows[i].ratio < rows[i - 1].ratio)) return false;
    }
    return true;
}

} // namespace rast
