#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "rast/config.hpp"
#include "rast/data.hpp"
#include "rast/metrics.hpp"
#include "rast/model.hpp"
#include "rast/optim.hpp"
#include "rast/store.hpp"

namespace rast {

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    std::size_t horizon = 0;
    double train_loss = 0.0; // masked MAE data term, normalized units
    double val_mae = 0.0;    // de-normalized, pooled over all steps
    std::size_t skipped_steps = 0;
    bool store_updated = false;
    std::size_t spatial_size = 0;
    std::size_t temporal_size = 0;
    double seconds = 0.0;
};

/// One bank maintenance pass at the end of an update epoch.
struct StoreEvent {
    std::size_t epoch = 0;
    std::string bank;
    std::size_t inserted = 0;
    std::size_t blended = 0;
    std::size_t evicted = 0;
    std::size_t size = 0;
    std::string index;
    bool downgraded = false;
};

struct TrainOptions {
    std::filesystem::path out_dir; // empty: keep everything in memory
    std::string data_source;       // recorded in the checkpoint
    std::function<void(const std::string&)> log;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::vector<StoreEvent> events;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
    bool stopped_early = false;
    MetricsReport val;
    MetricsReport test;

    nlohmann::json history_json() const;
    nlohmann::json events_json() const;
};

/// Masked-MAE training with Adam, MultiStepLR, curriculum horizons, periodic
/// store maintenance and early stopping on validation MAE.
class Trainer {
public:
    Trainer(RunConfig cfg, const DatasetBundle& data);

    TrainResult fit(const TrainOptions& options = {});

    const RunConfig& config() const { return cfg_; }
    RastModel& model() { return *model_; }
    RetrievalStore& store() { return *store_; }
    bool uses_store() const { return cfg_.model.output_type != OutputType::QueryOnly; }

private:
    double train_epoch(std::size_t horizon, double lr, std::size_t& skipped, bool collect);
    void maintain_store(std::size_t epoch, TrainResult& result);

    RunConfig cfg_;
    const DatasetBundle& data_;
    Rng rng_;
    std::unique_ptr<RastModel> model_;
    std::unique_ptr<RetrievalStore> store_;
    ParameterList params_;
    AdamState adam_;
    std::vector<double> sample_sp_, sample_tp_;
    std::size_t seen_rows_ = 0;
};

/// Read-only pass over a split: the store is searched but never written.
MetricsReport evaluate(const RastModel& model, const RetrievalStore* store, const DatasetBundle& data, Split split,
                       std::size_t batch_size);

/// Same predictions, masked MAE in normalized units.
double evaluate_normalized_mae(const RastModel& model, const RetrievalStore* store, const DatasetBundle& data,
                               Split split, std::size_t batch_size);

} // namespace rast
