#include "rast/store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "rast/binary_io.hpp"
#include "rast/errors.hpp"

namespace rast {

namespace {

constexpr std::string_view kMagic = "RASTBANK";
constexpr std::uint16_t kSnapshotVersion = 1;

template <typename T>
double squared_distance(const double* q, const T* v, std::size_t d) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        const double a = q[i] - static_cast<double>(v[i]);
        const double b = q[i + 1] - static_cast<double>(v[i + 1]);
        const double c = q[i + 2] - static_cast<double>(v[i + 2]);
        const double e = q[i + 3] - static_cast<double>(v[i + 3]);
        s0 += a * a;
        s1 += b * b;
        s2 += c * c;
        s3 += e * e;
    }
    for (; i < d; ++i) {
        const double a = q[i] - static_cast<double>(v[i]);
        s0 += a * a;
    }
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
double entropy_impl(std::span<const T> v) {
    if (v.size() <= 1) return 0.0;
    double mx = -std::numeric_limits<double>::infinity();
    for (T x : v) mx = std::max(mx, static_cast<double>(x));
    double z = 0.0, weighted = 0.0;
    for (T x : v) {
        const double shifted = static_cast<double>(x) - mx;
        const double e = std::exp(shifted);
        z += e;
        weighted += e * shifted;
    }
    // H = log Z - E_p[x - max]
    return std::max(0.0, std::log(z) - weighted / z);
}

// Keeps the k best (similarity desc, id asc) hits seen so far, sorted.
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { items_.reserve(k + 1); }

    static bool better(double s, std::uint32_t id, const SearchHit& h) {
        return s > h.similarity || (s == h.similarity && id < h.id);
    }

    void offer(double s, std::uint32_t id) {
        if (items_.size() == k_ && !better(s, id, items_.back())) return;
        auto pos = items_.end();
        while (pos != items_.begin() && better(s, id, *(pos - 1))) --pos;
        items_.insert(pos, SearchHit{id, s, 0.0});
        if (items_.size() > k_) items_.pop_back();
    }

    std::vector<SearchHit> take() { return std::move(items_); }

private:
    std::size_t k_;
    std::vector<SearchHit> items_;
};

void check_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": vector length " + std::to_string(got) + " != bank dimension " +
                         std::to_string(want));
    }
}

} // namespace

std::string to_string(BankTag tag) { return tag == BankTag::Spatial ? "spatial" : "temporal"; }

double similarity(std::span<const double> q, std::span<const double> v) {
    if (q.size() != v.size()) throw ShapeError("similarity: lengths " + std::to_string(q.size()) + " and " +
                                               std::to_string(v.size()) + " differ");
    return -squared_distance(q.data(), v.data(), q.size());
}

double similarity(std::span<const double> q, std::span<const float> v) {
    if (q.size() != v.size()) throw ShapeError("similarity: lengths " + std::to_string(q.size()) + " and " +
                                               std::to_string(v.size()) + " differ");
    return -squared_distance(q.data(), v.data(), q.size());
}

double entropy(std::span<const double> v) { return entropy_impl(v); }
double entropy(std::span<const float> v) { return entropy_impl(v); }

std::vector<double> momentum_shares(std::span<const double> similarities, std::span<const double> entropies,
                                    double lambda_div, double tau) {
    if (!(tau > 0.0)) throw ConfigError("momentum temperature tau must be positive, got " + std::to_string(tau));
    if (similarities.size() != entropies.size()) throw ShapeError("momentum_shares: length mismatch");
    std::vector<double> logits(similarities.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] = (similarities[i] + lambda_div * entropies[i]) / tau;
        mx = std::max(mx, logits[i]);
    }
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (auto& l : logits) l /= z;
    return logits;
}

std::size_t PruneReport::count(const std::string& reason) const {
    return static_cast<std::size_t>(
        std::count_if(evicted.begin(), evicted.end(), [&](const Eviction& e) { return e.reason == reason; }));
}

std::size_t MemoryBank::CacheKeyHash::operator()(const CacheKey& key) const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    for (double x : key.query) mix(std::bit_cast<std::uint64_t>(x));
    mix(key.k);
    mix(key.n_probe);
    mix(key.generation);
    return static_cast<std::size_t>(h);
}

MemoryBank::MemoryBank(BankTag tag, std::size_t dim, StorePolicy policy, std::uint64_t seed)
    : tag_(tag), dim_(dim), policy_(std::move(policy)), seed_(seed), rng_(seed),
      cache_(std::make_unique<Cache>(policy_.lru_capacity)) {
    if (dim_ == 0) throw ShapeError("memory bank dimension must be positive");
    policy_.validate();
}

MemoryBank::MemoryBank(const MemoryBank& o)
    : tag_(o.tag_), dim_(o.dim_), policy_(o.policy_), seed_(o.seed_), rng_(o.rng_), data_(o.data_),
      meta_(o.meta_), index_(o.index_), list_offsets_(o.list_offsets_), list_ids_(o.list_ids_),
      list_vectors_(o.list_vectors_), rebuilds_(o.rebuilds_), recent_(o.recent_), recent_seen_(o.recent_seen_),
      cache_(std::make_unique<Cache>(policy_.lru_capacity)) {}

MemoryBank& MemoryBank::operator=(const MemoryBank& o) {
    if (this != &o) {
        MemoryBank copy(o);
        *this = std::move(copy);
    }
    return *this;
}

MemoryBank::MemoryBank(MemoryBank&&) noexcept = default;
MemoryBank& MemoryBank::operator=(MemoryBank&&) noexcept = default;
MemoryBank::~MemoryBank() = default;

std::span<const float> MemoryBank::vector(std::uint32_t id) const {
    if (id >= meta_.size()) throw ContractError("entry id " + std::to_string(id) + " out of range");
    return {data_.data() + static_cast<std::size_t>(id) * dim_, dim_};
}

PatternEntry MemoryBank::entry(std::uint32_t id) const {
    auto v = vector(id);
    const auto& m = meta_[id];
    return PatternEntry{{v.begin(), v.end()}, m.momentum, m.epoch_stamp, m.insert_count, m.mean, m.variance};
}

void MemoryBank::refresh_meta(std::uint32_t id) {
    auto v = vector(id);
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(dim_);
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    meta_[id].mean = mean;
    meta_[id].variance = var / static_cast<double>(dim_);
    meta_[id].entropy = entropy(v);
}

void MemoryBank::invalidate() {
    index_.built = false;
    index_.kind = IndexKind::Flat;
    index_.lists.clear();
    index_.centroids.clear();
    list_offsets_.clear();
    list_ids_.clear();
    list_vectors_.clear();
    ++index_.generation;
    std::lock_guard lock(cache_->mutex);
    cache_->lru.clear();
}

std::uint32_t MemoryBank::insert(std::span<const double> v, std::uint32_t epoch) {
    check_dim(v.size(), dim_, "insert");
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("insert: non-finite pattern value");
        data_.push_back(static_cast<float>(x));
    }
    Meta m;
    m.epoch_stamp = epoch;
    meta_.push_back(m);
    const auto id = static_cast<std::uint32_t>(meta_.size() - 1);
    refresh_meta(id);
    invalidate();
    return id;
}

void MemoryBank::blend(std::uint32_t id, std::span<const double> fresh, double rate, std::uint32_t epoch) {
    check_dim(fresh.size(), dim_, "blend");
    if (!(rate >= 0.0 && rate <= 1.0)) throw ContractError("blend rate must be in [0, 1]");
    if (id >= meta_.size()) throw ContractError("entry id " + std::to_string(id) + " out of range");
    float* v = data_.data() + static_cast<std::size_t>(id) * dim_;
    for (std::size_t d = 0; d < dim_; ++d) {
        v[d] = static_cast<float>((1.0 - rate) * static_cast<double>(v[d]) + rate * fresh[d]);
    }
    meta_[id].epoch_stamp = epoch;
    ++meta_[id].insert_count;
    refresh_meta(id);
    invalidate();
}

BuildOutcome MemoryBank::build_index(IndexKind kind, std::size_t n_list) {
    invalidate();
    ++rebuilds_;
    const std::size_t m = size();
    BuildOutcome outcome;
    if (kind == IndexKind::Ivf) {
        if (n_list == 0) n_list = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
        if (m == 0 || n_list > m) {
            outcome.downgraded = true;
            outcome.warning = "IVF needs n_list (" + std::to_string(n_list) + ") <= entries (" + std::to_string(m) +
                              "); using Flat";
            kind = IndexKind::Flat;
        }
    }
    outcome.kind = kind;
    index_.kind = kind;
    index_.built = true;

    if (kind == IndexKind::Flat) {
        index_.n_list = 1;
        index_.n_probe = 1;
        index_.lists.assign(1, {});
        index_.lists[0].resize(m);
        std::iota(index_.lists[0].begin(), index_.lists[0].end(), 0u);
        return outcome;
    }

    // Seeded k-means++ initialization followed by a fixed number of Lloyd rounds.
    Rng rng(seed_);
    const std::size_t d = dim_;
    std::vector<double> points(data_.begin(), data_.end());
    std::vector<double> cent(n_list * d);
    std::vector<double> best(m, std::numeric_limits<double>::infinity());
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::size_t first = pick(rng);
    std::copy_n(points.begin() + static_cast<long>(first * d), d, cent.begin());
    for (std::size_t c = 1; c < n_list; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            best[i] = std::min(best[i], squared_distance(&points[i * d], &cent[(c - 1) * d], d));
            total += best[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng), acc = 0.0;
            chosen = m - 1;
            for (std::size_t i = 0; i < m; ++i) {
                acc += best[i];
                if (acc >= r && best[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        std::copy_n(points.begin() + static_cast<long>(chosen * d), d, cent.begin() + static_cast<long>(c * d));
    }

    std::vector<std::uint32_t> assign(m, 0);
    auto assign_all = [&] {
        for (std::size_t i = 0; i < m; ++i) {
            double bd = std::numeric_limits<double>::infinity();
            std::uint32_t bc = 0;
            for (std::size_t c = 0; c < n_list; ++c) {
                const double dist = squared_distance(&points[i * d], &cent[c * d], d);
                if (dist < bd) {
                    bd = dist;
                    bc = static_cast<std::uint32_t>(c);
                }
            }
            assign[i] = bc;
        }
    };
    std::vector<double> sums(n_list * d);
    std::vector<std::size_t> counts(n_list);
    for (std::size_t it = 0; it < policy_.kmeans_iters; ++it) {
        assign_all();
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < m; ++i) {
            ++counts[assign[i]];
            for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += points[i * d + j];
        }
        for (std::size_t c = 0; c < n_list; ++c) {
            if (counts[c] == 0) continue; // empty lists keep their centroid
            for (std::size_t j = 0; j < d; ++j) cent[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        }
    }
    assign_all();

    index_.n_list = n_list;
    index_.n_probe = policy_.n_probe != 0 ? std::min(policy_.n_probe, n_list)
                                          : static_cast<std::size_t>(std::ceil(static_cast<double>(n_list) / 4.0));
    index_.centroids = std::move(cent);
    index_.lists.assign(n_list, {});
    for (std::size_t i = 0; i < m; ++i) index_.lists[assign[i]].push_back(static_cast<std::uint32_t>(i));

    list_offsets_.assign(n_list + 1, 0);
    list_ids_.reserve(m);
    list_vectors_.reserve(m * d);
    for (std::size_t c = 0; c < n_list; ++c) {
        for (auto id : index_.lists[c]) {
            list_ids_.push_back(id);
            list_vectors_.insert(list_vectors_.end(), data_.begin() + static_cast<long>(id * d),
                                 data_.begin() + static_cast<long>((id + 1) * d));
        }
        list_offsets_[c + 1] = static_cast<std::uint32_t>(list_ids_.size());
    }
    return outcome;
}

std::vector<SearchHit> MemoryBank::search_exact(std::span<const double> q, std::size_t k) const {
    check_dim(q.size(), dim_, "search");
    if (k == 0) throw ContractError("search: k must be at least 1");
    TopK top(k);
    const std::size_t m = size();
    for (std::size_t i = 0; i < m; ++i) {
        top.offer(-squared_distance(q.data(), data_.data() + i * dim_, dim_), static_cast<std::uint32_t>(i));
    }
    auto hits = top.take();
    for (auto& h : hits) h.momentum = meta_[h.id].momentum;
    return hits;
}

std::vector<SearchHit> MemoryBank::scan(std::span<const double> q, std::size_t k, std::size_t n_probe) const {
    if (!index_.built || index_.kind == IndexKind::Flat) return search_exact(q, k);
    const std::size_t d = dim_;
    const std::size_t n_list = index_.n_list;
    std::vector<std::pair<double, std::uint32_t>> order(n_list);
    for (std::size_t c = 0; c < n_list; ++c) {
        order[c] = {squared_distance(q.data(), &index_.centroids[c * d], d), static_cast<std::uint32_t>(c)};
    }
    const std::size_t probe = std::min(n_probe == 0 ? index_.n_probe : n_probe, n_list);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(probe), order.end());
    TopK top(k);
    std::size_t scanned = 0;
    for (std::size_t p = 0; p < n_list; ++p) {
        if (p == probe) {
            // Under-filled probe set: widen until k candidates are available.
            if (scanned >= k) break;
            std::sort(order.begin() + static_cast<long>(probe), order.end());
        }
        if (p >= probe && scanned >= k) break;
        const auto c = order[p].second;
        for (auto pos = list_offsets_[c]; pos < list_offsets_[c + 1]; ++pos) {
            top.offer(-squared_distance(q.data(), &list_vectors_[static_cast<std::size_t>(pos) * d], d),
                      list_ids_[pos]);
        }
        scanned += list_offsets_[c + 1] - list_offsets_[c];
    }
    auto hits = top.take();
    for (auto& h : hits) h.momentum = meta_[h.id].momentum;
    return hits;
}

std::vector<SearchHit> MemoryBank::search(std::span<const double> q, std::size_t k, std::size_t n_probe,
                                          bool use_cache) const {
    check_dim(q.size(), dim_, "search");
    if (k == 0) throw ContractError("search: k must be at least 1");
    if (empty()) return {};
    if (!use_cache) return scan(q, k, n_probe);

    CacheKey key{{q.begin(), q.end()}, k, n_probe, index_.generation};
    {
        std::lock_guard lock(cache_->mutex);
        if (auto hit = cache_->lru.get(key)) {
            for (auto& h : *hit) h.momentum = meta_[h.id].momentum;
            return std::move(*hit);
        }
    }
    auto hits = scan(q, k, n_probe);
    std::lock_guard lock(cache_->mutex);
    cache_->lru.put(std::move(key), hits);
    return hits;
}

std::size_t MemoryBank::cache_hits() const {
    std::lock_guard lock(cache_->mutex);
    return cache_->lru.hits();
}

std::size_t MemoryBank::cache_misses() const {
    std::lock_guard lock(cache_->mutex);
    return cache_->lru.misses();
}

double MemoryBank::update_momentum(const std::vector<SearchHit>& hits) {
    if (hits.empty()) throw ContractError("update_momentum: no retrieved items");
    std::vector<double> s(hits.size()), h(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        s[i] = hits[i].similarity;
        h[i] = meta_.at(hits[i].id).entropy;
    }
    const auto shares = momentum_shares(s, h, policy_.lambda_div, policy_.tau);
    double total = 0.0;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        meta_[hits[i].id].momentum += shares[i];
        total += shares[i];
    }
    return total;
}

std::vector<std::uint32_t> MemoryBank::capacity_victims() const {
    if (size() <= policy_.capacity) return {};
    std::vector<std::uint32_t> ids(size());
    std::iota(ids.begin(), ids.end(), 0u);
    // Lowest momentum goes first; on ties the higher id is evicted.
    std::sort(ids.begin(), ids.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (meta_[a].momentum != meta_[b].momentum) return meta_[a].momentum < meta_[b].momentum;
        return a > b;
    });
    ids.resize(size() - policy_.capacity);
    return ids;
}

void MemoryBank::remove_entries(const std::vector<bool>& drop) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < meta_.size(); ++i) {
        if (drop[i]) continue;
        if (w != i) {
            std::memmove(data_.data() + w * dim_, data_.data() + i * dim_, dim_ * sizeof(float));
            meta_[w] = meta_[i];
        }
        ++w;
    }
    meta_.resize(w);
    data_.resize(w * dim_);
    invalidate();
}

UpdateReport MemoryBank::update_bank(std::span<const double> fresh, std::uint32_t epoch) {
    if (fresh.size() % dim_ != 0) {
        throw ShapeError("update_bank: " + std::to_string(fresh.size()) + " values is not a multiple of dimension " +
                         std::to_string(dim_));
    }
    UpdateReport report;
    const double log_threshold = std::log(policy_.blend_threshold);
    for (std::size_t r = 0; r < fresh.size() / dim_; ++r) {
        auto row = fresh.subspan(r * dim_, dim_);
        if (!empty()) {
            const auto nearest = search_exact(row, 1).front();
            if (nearest.similarity >= log_threshold) {
                const double rate = std::clamp(1.0 / (1.0 + std::exp(-nearest.similarity)), policy_.blend_rate_min,
                                               policy_.blend_rate_max);
                blend(nearest.id, row, rate, epoch);
                ++report.blended;
                continue;
            }
        }
        insert(row, epoch);
        ++report.inserted;
    }
    const auto victims = capacity_victims();
    if (!victims.empty()) {
        std::vector<bool> drop(size(), false);
        for (auto id : victims) drop[id] = true;
        remove_entries(drop);
        report.evicted = victims.size();
    }
    return report;
}

void MemoryBank::record_queries(std::span<const double> rows) {
    check_dim(rows.size() % dim_ == 0 ? dim_ : rows.size(), dim_, "record_queries");
    const std::size_t cap = policy_.recent_query_cap;
    for (std::size_t r = 0; r < rows.size() / dim_; ++r) {
        auto row = rows.subspan(r * dim_, dim_);
        const std::size_t held = recent_.size() / dim_;
        if (held < cap) {
            recent_.insert(recent_.end(), row.begin(), row.end());
        } else {
            std::uniform_int_distribution<std::size_t> u(0, recent_seen_);
            const std::size_t j = u(rng_);
            if (j < cap) std::copy(row.begin(), row.end(), recent_.begin() + static_cast<long>(j * dim_));
        }
        ++recent_seen_;
    }
}

PruneReport MemoryBank::prune_and_decay(std::uint32_t epoch, std::span<const double> extra_queries) {
    if (extra_queries.size() % dim_ != 0) throw ShapeError("prune_and_decay: extra queries width mismatch");
    PruneReport report;
    const std::size_t m = size();
    std::vector<bool> drop(m, false);
    for (std::size_t i = 0; i < m; ++i) {
        const auto stamp = meta_[i].epoch_stamp;
        if (epoch > stamp && epoch - stamp > policy_.decay_epochs) {
            drop[i] = true;
            report.evicted.push_back({static_cast<std::uint32_t>(i), "decay"});
        }
    }

    const std::size_t n_recent = recent_.size() / dim_;
    const std::size_t n_extra = extra_queries.size() / dim_;
    if (n_recent + n_extra > 0) {
        // exp(s) < threshold  <=>  s < log(threshold)
        const double log_threshold =
            policy_.prune_threshold > 0.0 ? std::log(policy_.prune_threshold) : -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (drop[i]) continue;
            const float* v = data_.data() + i * dim_;
            bool relevant = false;
            for (std::size_t qi = 0; qi < n_recent + n_extra && !relevant; ++qi) {
                const double* q = qi < n_recent ? &recent_[qi * dim_] : &extra_queries[(qi - n_recent) * dim_];
                relevant = -squared_distance(q, v, dim_) >= log_threshold;
            }
            if (!relevant) {
                drop[i] = true;
                report.evicted.push_back({static_cast<std::uint32_t>(i), "similarity"});
            }
        }
    }

    std::vector<std::uint32_t> alive;
    for (std::size_t i = 0; i < m; ++i)
        if (!drop[i]) alive.push_back(static_cast<std::uint32_t>(i));
    if (alive.size() > policy_.capacity) {
        std::sort(alive.begin(), alive.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (meta_[a].momentum != meta_[b].momentum) return meta_[a].momentum < meta_[b].momentum;
            return a > b;
        });
        for (std::size_t j = 0; j < alive.size() - policy_.capacity; ++j) {
            drop[alive[j]] = true;
            report.evicted.push_back({alive[j], "capacity"});
        }
    }

    recent_.clear();
    recent_seen_ = 0;
    if (!report.evicted.empty()) remove_entries(drop);
    return report;
}

void MemoryBank::save(const std::filesystem::path& path) const {
    if (size() > std::numeric_limits<std::uint32_t>::max()) throw ContractError("bank too large to snapshot");
    ByteWriter w;
    w.bytes(kMagic);
    w.u16(kSnapshotVersion);
    w.u8(static_cast<std::uint8_t>(tag_));
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u32(static_cast<std::uint32_t>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t d = 0; d < dim_; ++d) w.f32(data_[i * dim_ + d]);
        w.f64(meta_[i].momentum);
        w.u32(meta_[i].epoch_stamp);
        w.u32(meta_[i].insert_count);
    }
    w.crc_trailer();
    write_file_atomic(path, w.buffer());
}

MemoryBank MemoryBank::load(const std::filesystem::path& path, StorePolicy policy, std::uint64_t seed) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    if (r.bytes(kMagic.size(), "magic") != kMagic) throw FormatError("not a RASTBANK snapshot", 0);
    const auto version_at = r.offset();
    const auto version = r.u16("version");
    if (version != kSnapshotVersion) {
        throw FormatError("unsupported snapshot version " + std::to_string(version), version_at);
    }
    const auto tag_at = r.offset();
    const auto tag = r.u8("dimension tag");
    if (tag > 1) throw FormatError("unknown dimension tag " + std::to_string(tag), tag_at);
    const auto dim_at = r.offset();
    const auto dim = r.u32("dimension");
    if (dim == 0) throw FormatError("zero dimension", dim_at);
    const auto count = r.u32("entry count");
    const std::size_t record = static_cast<std::size_t>(dim) * 4 + 16;
    if (r.remaining() < static_cast<std::size_t>(count) * record + 4) {
        throw FormatError("truncated snapshot: " + std::to_string(count) + " entries declared", bytes.size());
    }
    r.verify_crc_trailer();

    MemoryBank bank(static_cast<BankTag>(tag), dim, std::move(policy), seed);
    bank.data_.resize(static_cast<std::size_t>(count) * dim);
    bank.meta_.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        for (std::uint32_t d = 0; d < dim; ++d) bank.data_[static_cast<std::size_t>(i) * dim + d] = r.f32("vector");
        bank.meta_[i].momentum = r.f64("momentum");
        bank.meta_[i].epoch_stamp = r.u32("epoch stamp");
        bank.meta_[i].insert_count = r.u32("insert count");
        bank.refresh_meta(i);
    }
    if (r.remaining() != 4) throw FormatError("trailing bytes after entries", r.offset());
    bank.build_index();
    return bank;
}

bool MemoryBank::same_content(const MemoryBank& o) const {
    if (tag_ != o.tag_ || dim_ != o.dim_ || size() != o.size()) return false;
    if (std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) != 0) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        const auto& a = meta_[i];
        const auto& b = o.meta_[i];
        if (std::bit_cast<std::uint64_t>(a.momentum) != std::bit_cast<std::uint64_t>(b.momentum) ||
            a.epoch_stamp != b.epoch_stamp || a.insert_count != b.insert_count) {
            return false;
        }
    }
    return true;
}

} // namespace rast
