#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "rast/config.hpp"
#include "rast/lru_cache.hpp"
#include "rast/ops.hpp"

namespace rast {

enum class BankTag : std::uint8_t { Spatial = 0, Temporal = 1 };
std::string to_string(BankTag tag);

/// Negated squared L2 distance, accumulated in double.
double similarity(std::span<const double> q, std::span<const double> v);
double similarity(std::span<const double> q, std::span<const float> v);

/// Shannon entropy (natural log) of softmax(v).
double entropy(std::span<const double> v);
double entropy(std::span<const float> v);

/// softmax((s_i + lambda * H_i) / tau) over one query's retrieved items.
std::vector<double> momentum_shares(std::span<const double> similarities, std::span<const double> entropies,
                                    double lambda_div, double tau);

/// Snapshot of one stored pattern. Ids are positions in the bank and are
/// reassigned after evictions.
struct PatternEntry {
    std::vector<float> vector;
    double momentum = 1.0;
    std::uint32_t epoch_stamp = 0;
    std::uint32_t insert_count = 1;
    double mean = 0.0;
    double variance = 0.0;
};

struct SearchHit {
    std::uint32_t id = 0;
    double similarity = 0.0;
    double momentum = 0.0;
};

struct IndexState {
    IndexKind kind = IndexKind::Flat;
    std::size_t n_list = 0;
    std::size_t n_probe = 0;
    std::vector<double> centroids;             // n_list x D
    std::vector<std::vector<std::uint32_t>> lists;
    std::uint64_t generation = 0;
    bool built = false;
};

struct BuildOutcome {
    IndexKind kind = IndexKind::Flat;
    bool downgraded = false;
    std::string warning;
};

struct UpdateReport {
    std::size_t inserted = 0;
    std::size_t blended = 0;
    std::size_t evicted = 0;
};

struct Eviction {
    std::uint32_t id = 0; // id before the eviction pass
    std::string reason;   // "decay", "similarity" or "capacity"
};

struct PruneReport {
    std::vector<Eviction> evicted;
    std::size_t count(const std::string& reason) const;
};

class MemoryBank {
public:
    MemoryBank(BankTag tag, std::size_t dim, StorePolicy policy = {}, std::uint64_t seed = 0);
    MemoryBank(const MemoryBank& other);
    MemoryBank& operator=(const MemoryBank& other);
    MemoryBank(MemoryBank&&) noexcept;
    MemoryBank& operator=(MemoryBank&&) noexcept;
    ~MemoryBank();

    BankTag tag() const { return tag_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return meta_.size(); }
    bool empty() const { return meta_.empty(); }
    const StorePolicy& policy() const { return policy_; }

    std::span<const float> vector(std::uint32_t id) const;
    double momentum(std::uint32_t id) const { return meta_.at(id).momentum; }
    PatternEntry entry(std::uint32_t id) const;
    double entry_entropy(std::uint32_t id) const { return meta_.at(id).entropy; }

    /// Appends an entry verbatim (momentum 1, stats from v). Invalidates the index.
    std::uint32_t insert(std::span<const double> v, std::uint32_t epoch);
    /// v <- (1 - rate) v + rate * fresh; refreshes the stamp. Invalidates the index.
    void blend(std::uint32_t id, std::span<const double> fresh, double rate, std::uint32_t epoch);

    /// n_list == 0 selects ceil(sqrt(M)). IVF on an empty bank or with
    /// n_list > M falls back to Flat and says so in the outcome.
    BuildOutcome build_index(IndexKind kind, std::size_t n_list = 0);
    BuildOutcome build_index() { return build_index(policy_.index_kind, policy_.n_list); }
    const IndexState& index() const { return index_; }
    std::uint64_t generation() const { return index_.generation; }
    std::size_t rebuild_count() const { return rebuilds_; }

    /// Top-k by similarity, descending, ties to the lower id. n_probe == 0
    /// uses the index default. Without a built index the scan is exhaustive.
    std::vector<SearchHit> search(std::span<const double> q, std::size_t k, std::size_t n_probe = 0,
                                  bool use_cache = true) const;
    /// Exhaustive scan that ignores the index and the cache.
    std::vector<SearchHit> search_exact(std::span<const double> q, std::size_t k) const;

    /// Adds the momentum shares of one query's hits. Returns the total mass added.
    double update_momentum(const std::vector<SearchHit>& hits);

    /// Matches every fresh row against its nearest entry and blends or inserts,
    /// then enforces capacity. `fresh` holds rows of width dim().
    UpdateReport update_bank(std::span<const double> fresh, std::uint32_t epoch);

    /// Queries seen since the last prune; sampled into a bounded reservoir.
    void record_queries(std::span<const double> rows);
    std::size_t recorded_queries() const { return recent_.size() / dim_; }

    /// Decay, similarity pruning against recorded queries plus `extra_queries`,
    /// then capacity. Clears the query reservoir.
    PruneReport prune_and_decay(std::uint32_t epoch, std::span<const double> extra_queries = {});

    std::size_t cache_hits() const;
    std::size_t cache_misses() const;

    void save(const std::filesystem::path& path) const;
    /// Loads a snapshot and rebuilds the index with `policy`.
    static MemoryBank load(const std::filesystem::path& path, StorePolicy policy = {}, std::uint64_t seed = 0);

    /// Field-by-field equality of stored content.
    bool same_content(const MemoryBank& other) const;

private:
    struct Meta {
        double momentum = 1.0;
        std::uint32_t epoch_stamp = 0;
        std::uint32_t insert_count = 1;
        double mean = 0.0;
        double variance = 0.0;
        double entropy = 0.0;
    };

    struct CacheKey {
        std::vector<double> query;
        std::size_t k = 0;
        std::size_t n_probe = 0;
        std::uint64_t generation = 0;
        bool operator==(const CacheKey& o) const = default;
    };
    struct CacheKeyHash {
        std::size_t operator()(const CacheKey& key) const;
    };
    struct Cache {
        explicit Cache(std::size_t capacity) : lru(capacity) {}
        std::mutex mutex;
        LruCache<CacheKey, std::vector<SearchHit>, CacheKeyHash> lru;
    };

    void refresh_meta(std::uint32_t id);
    void invalidate();
    void remove_entries(const std::vector<bool>& drop);
    std::vector<std::uint32_t> capacity_victims() const;
    std::vector<SearchHit> scan(std::span<const double> q, std::size_t k, std::size_t n_probe) const;

    BankTag tag_;
    std::size_t dim_;
    StorePolicy policy_;
    std::uint64_t seed_;
    Rng rng_;
    std::vector<float> data_; // size() x dim_
    std::vector<Meta> meta_;
    IndexState index_;
    std::vector<std::uint32_t> list_offsets_; // CSR over the IVF lists
    std::vector<std::uint32_t> list_ids_;
    std::vector<float> list_vectors_;
    std::size_t rebuilds_ = 0;
    std::vector<double> recent_;
    std::size_t recent_seen_ = 0;
    std::unique_ptr<Cache> cache_;
};

/// The pair of banks consulted by the retriever.
struct RetrievalStore {
    MemoryBank spatial;
    MemoryBank temporal;

    RetrievalStore(std::size_t dim, const StorePolicy& policy, std::uint64_t seed)
        : spatial(BankTag::Spatial, dim, policy, seed), temporal(BankTag::Temporal, dim, policy, seed + 1) {}
};

} // namespace rast
