#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rast/ops.hpp"

namespace rast {

/// `count` rows of width `dim` drawn from `clusters` isotropic Gaussians
/// (unit spread) whose centers are uniform in [-10, 10]^dim. The centers
/// depend on `rng` only through its first draws, so equal seeds give equal
/// mixtures.
std::vector<double> gaussian_mixture(std::size_t count, std::size_t dim, std::size_t clusters, Rng& rng,
                                     std::vector<double>* centers = nullptr);

struct BenchOptions {
    std::vector<std::size_t> sizes{1000, 8000};
    std::size_t dim = 32;
    std::size_t clusters = 10;
    std::size_t queries = 500;
    std::size_t k = 5;
    std::size_t repeats = 7;
    std::uint64_t seed = 42;
};

struct BenchRow {
    std::size_t size = 0;
    std::size_t n_list = 0;
    std::size_t n_probe = 0;
    double flat_us = 0.0; // median over repeats of the mean per-query latency
    double ivf_us = 0.0;
    double ratio = 0.0;   // ivf_us / flat_us
    double recall = 0.0;  // IVF recall@k against Flat
    std::size_t returned = 0; // hits per query (min(k, size))
};

std::vector<BenchRow> bench_store(const BenchOptions& options);
std::string bench_csv(const std::vector<BenchRow>& rows);
/// True when the IVF/Flat latency ratio strictly decreases with size.
bool ratio_decreasing(const std::vector<BenchRow>& rows);

} // namespace rast
