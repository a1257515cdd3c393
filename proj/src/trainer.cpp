#include "rast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "rast/binary_io.hpp"
#include "rast/checkpoint.hpp"
#include "rast/errors.hpp"
#include "rast/ops.hpp"
#include "rast/retriever.hpp"

namespace rast {

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    const auto text = j.dump(2) + "\n";
    write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

/// Keeps steps [0, h) of a [B, H, ...] validity mask.
std::vector<std::uint8_t> truncate_mask(const std::vector<std::uint8_t>& valid, std::size_t batch, std::size_t horizon,
                                        std::size_t h, std::size_t per_step) {
    if (h == horizon) return valid;
    std::vector<std::uint8_t> out(batch * h * per_step);
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(valid.begin() + static_cast<std::ptrdiff_t>(b * horizon * per_step), h * per_step,
                    out.begin() + static_cast<std::ptrdiff_t>(b * h * per_step));
    }
    return out;
}

struct Predictions {
    std::vector<double> normalized;
    std::vector<double> target_norm;
    std::vector<double> target_raw;
    std::vector<std::uint8_t> valid;
    std::size_t samples = 0;
};

Predictions predict_split(const RastModel& model, const RetrievalStore* store, const DatasetBundle& data, Split split,
                          std::size_t batch_size) {
    NoGradGuard no_grad;
    const auto& starts = data.starts(split);
    Predictions p;
    p.samples = starts.size();
    const ForwardContext ctx{};
    for (std::size_t i = 0; i < starts.size(); i += batch_size) {
        const auto n = std::min(batch_size, starts.size() - i);
        const auto batch = data.batch(std::span(starts).subspan(i, n));
        const auto out = model.forward(batch.x, store, ctx);
        const auto pred = out.prediction.data();
        p.normalized.insert(p.normalized.end(), pred.begin(), pred.end());
        const auto y = batch.y.data();
        p.target_norm.insert(p.target_norm.end(), y.begin(), y.end());
        p.target_raw.insert(p.target_raw.end(), batch.y_raw.begin(), batch.y_raw.end());
        p.valid.insert(p.valid.end(), batch.valid.begin(), batch.valid.end());
    }
    return p;
}

} // namespace

nlohmann::json TrainResult::history_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : history) {
        h.push_back({{"epoch", e.epoch},
                     {"lr", e.lr},
                     {"horizon", e.horizon},
                     {"train_loss", e.train_loss},
                     {"val_mae", e.val_mae},
                     {"skipped_steps", e.skipped_steps},
                     {"store_updated", e.store_updated},
                     {"spatial_size", e.spatial_size},
                     {"temporal_size", e.temporal_size},
                     {"seconds", e.seconds}});
    }
    return h;
}

nlohmann::json TrainResult::events_json() const {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : events) {
        ev.push_back({{"epoch", e.epoch},
                      {"bank", e.bank},
                      {"inserted", e.inserted},
                      {"blended", e.blended},
                      {"evicted", e.evicted},
                      {"size", e.size},
                      {"index", e.index},
                      {"downgraded", e.downgraded}});
    }
    return ev;
}

Trainer::Trainer(RunConfig cfg, const DatasetBundle& data) : cfg_(std::move(cfg)), data_(data), rng_(cfg_.seed) {
    if (cfg_.model.input_dim != data_.raw().channels) {
        throw ConfigError("model.input_dim is " + std::to_string(cfg_.model.input_dim) + " but the data has " +
                          std::to_string(data_.raw().channels) + " channels");
    }
    if (cfg_.model.input_len != data_.input_len() || cfg_.model.output_len != data_.output_len() ||
        cfg_.model.output_dim != data_.output_dim()) {
        throw ConfigError("dataset windows were built for a different config");
    }
    if (cfg_.model.num_nodes == 0) cfg_.model.num_nodes = data_.graph().num_nodes();
    cfg_.validate();
    model_ = std::make_unique<RastModel>(cfg_.model, data_.graph(), rng_);
    store_ = std::make_unique<RetrievalStore>(cfg_.model.retrieval_dim, cfg_.store, store_seed(cfg_));
    params_ = model_->parameters();
}

double Trainer::train_epoch(std::size_t horizon, double lr, std::size_t& skipped, bool collect) {
    auto order = data_.starts(Split::Train);
    std::shuffle(order.begin(), order.end(), rng_);
    const auto& m = cfg_.model;
    const auto bs = cfg_.train.batch_size;
    const auto per_step = m.num_nodes * m.output_dim;
    const auto opt = AdamOptions::from(cfg_.train);
    const ForwardContext ctx{true, &rng_};
    const std::size_t d = m.retrieval_dim;
    const auto cap = cfg_.store.update_sample;
    double loss_sum = 0.0;
    std::size_t valid_sum = 0;
    const auto skipped_before = adam_.skipped;

    auto reservoir = [&](std::vector<double>& sample, std::span<const double> rows, std::size_t seen) {
        for (std::size_t r = 0; r * d < rows.size(); ++r) {
            const auto row = rows.subspan(r * d, d);
            const auto index = seen + r;
            if (index < cap) {
                sample.insert(sample.end(), row.begin(), row.end());
            } else {
                std::uniform_int_distribution<std::size_t> pick(0, index);
                const auto j = pick(rng_);
                if (j < cap) std::copy(row.begin(), row.end(), sample.begin() + static_cast<std::ptrdiff_t>(j * d));
            }
        }
    };

    for (std::size_t i = 0; i < order.size(); i += bs) {
        const auto n = std::min(bs, order.size() - i);
        const auto batch = data_.batch(std::span(order).subspan(i, n));
        for (auto& p : params_) {
            if (p.tensor.has_grad()) p.tensor.zero_grad();
        }
        const auto out = model_->forward(batch.x, uses_store() ? store_.get() : nullptr, ctx);
        auto pred = out.prediction;
        auto target = batch.y;
        if (horizon < m.output_len) {
            pred = slice(pred, 1, 0, horizon);
            target = slice(target, 1, 0, horizon);
        }
        const auto loss = masked_mae_loss(pred, target, truncate_mask(batch.valid, n, m.output_len, horizon, per_step));
        if (loss.valid > 0) {
            loss.value.backward();
            adam_step(params_, adam_, opt, lr);
            loss_sum += loss.value.item() * static_cast<double>(loss.valid);
            valid_sum += loss.valid;
        }
        if (uses_store()) {
            const auto e_sp = out.query.e_sp.detach();
            const auto e_tp = out.query.e_tp.detach();
            if (out.spatial) apply_retrieval_feedback(store_->spatial, *out.spatial, e_sp);
            if (out.temporal) apply_retrieval_feedback(store_->temporal, *out.temporal, e_tp);
            if (collect) {
                reservoir(sample_sp_, e_sp.data(), seen_rows_);
                reservoir(sample_tp_, e_tp.data(), seen_rows_);
                seen_rows_ += e_sp.numel() / d;
            }
        }
    }
    skipped = adam_.skipped - skipped_before;
    if (valid_sum == 0) return std::numeric_limits<double>::quiet_NaN();
    return loss_sum / static_cast<double>(valid_sum);
}

void Trainer::maintain_store(std::size_t epoch, TrainResult& result) {
    const auto stamp = static_cast<std::uint32_t>(epoch);
    auto run = [&](MemoryBank& bank, const std::vector<double>& sample) {
        StoreEvent ev;
        ev.epoch = epoch;
        ev.bank = to_string(bank.tag());
        const auto up = bank.update_bank(sample, stamp);
        const auto pr = bank.prune_and_decay(stamp, sample);
        const auto built = bank.build_index();
        ev.inserted = up.inserted;
        ev.blended = up.blended;
        ev.evicted = up.evicted + pr.evicted.size();
        ev.size = bank.size();
        ev.index = to_string(built.kind);
        ev.downgraded = built.downgraded;
        result.events.push_back(ev);
    };
    run(store_->spatial, sample_sp_);
    run(store_->temporal, sample_tp_);
    sample_sp_.clear();
    sample_tp_.clear();
    seen_rows_ = 0;
}

TrainResult Trainer::fit(const TrainOptions& options) {
    const auto& t = cfg_.train;
    auto log = [&](const std::string& s) {
        if (options.log) options.log(s);
    };
    TrainResult result;
    result.best_val_mae = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_params;
    std::unique_ptr<RetrievalStore> best_store;
    std::size_t since_best = 0;
    std::size_t non_finite = 0;
    const bool persist = !options.out_dir.empty();
    const bool has_val = !data_.starts(Split::Val).empty();

    for (std::size_t epoch = 0; epoch < t.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_schedule(epoch, t);
        rec.horizon = curriculum_horizon(epoch, t, cfg_.model.output_len);
        const bool update = uses_store() && t.update_interval > 0 && (epoch + 1) % t.update_interval == 0;
        rec.train_loss = train_epoch(rec.horizon, rec.lr, rec.skipped_steps, update);
        if (update) {
            maintain_store(epoch, result);
            rec.store_updated = true;
        }
        rec.spatial_size = store_->spatial.size();
        rec.temporal_size = store_->temporal.size();

        if (!std::isfinite(rec.train_loss)) {
            if (++non_finite >= 3) {
                throw NumericError("training diverged: loss non-finite for 3 consecutive epochs (last epoch " +
                                   std::to_string(epoch) + ", lr " + std::to_string(rec.lr) + ", " +
                                   std::to_string(rec.skipped_steps) + " skipped steps)");
            }
        } else {
            non_finite = 0;
        }

        const auto* store = uses_store() ? store_.get() : nullptr;
        rec.val_mae = has_val ? evaluate(*model_, store, data_, Split::Val, t.batch_size).row("avg").mae
                              : rec.train_loss;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        result.epochs_run = epoch + 1;
        if (options.on_epoch) options.on_epoch(rec);
        log("epoch " + std::to_string(epoch) + " loss " + std::to_string(rec.train_loss) + " val_mae " +
            std::to_string(rec.val_mae) + " h " + std::to_string(rec.horizon));

        if (std::isfinite(rec.val_mae) && rec.val_mae < result.best_val_mae) {
            result.best_val_mae = rec.val_mae;
            result.best_epoch = epoch;
            since_best = 0;
            best_params.clear();
            for (const auto& p : params_) best_params.push_back(p.tensor.to_vector());
            best_store = std::make_unique<RetrievalStore>(*store_);
            if (persist) save_checkpoint(options.out_dir, cfg_, options.data_source, data_, *model_, *store_);
        } else if (++since_best >= t.patience) {
            result.stopped_early = true;
            log("early stop at epoch " + std::to_string(epoch) + ", best epoch " + std::to_string(result.best_epoch));
            break;
        }
    }

    if (!best_params.empty()) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto dst = params_[i].tensor.mutable_data();
            std::copy(best_params[i].begin(), best_params[i].end(), dst.begin());
        }
        *store_ = *best_store;
    } else if (persist) {
        save_checkpoint(options.out_dir, cfg_, options.data_source, data_, *model_, *store_);
    }
    const auto* store = uses_store() ? store_.get() : nullptr;
    result.val = evaluate(*model_, store, data_, Split::Val, t.batch_size);
    result.test = evaluate(*model_, store, data_, Split::Test, t.batch_size);
    if (persist) {
        write_json(options.out_dir / "history.json", result.history_json());
        write_json(options.out_dir / "events.json", result.events_json());
        write_json(options.out_dir / "metrics.json", {{"best_epoch", result.best_epoch},
                                                      {"best_val_mae", result.best_val_mae},
                                                      {"epochs_run", result.epochs_run},
                                                      {"stopped_early", result.stopped_early},
                                                      {"val", result.val.to_json()},
                                                      {"test", result.test.to_json()}});
    }
    return result;
}

MetricsReport evaluate(const RastModel& model, const RetrievalStore* store, const DatasetBundle& data, Split split,
                       std::size_t batch_size) {
    const auto p = predict_split(model, store, data, split, batch_size);
    const auto pred = data.denormalize_targets(p.normalized);
    const auto per_step = data.graph().num_nodes() * data.output_dim();
    if (p.samples == 0) {
        MetricsReport m;
        for (const char* name : {"h3", "h6", "h12", "avg"}) m.rows.push_back({name, 0, 0.0, 0.0, 0.0, 0});
        m.warnings.push_back("split '" + to_string(split) + "' has no windows");
        return m;
    }
    return compute_metrics(pred, p.target_raw, p.samples, data.output_len(), per_step, data.null_val());
}

double evaluate_normalized_mae(const RastModel& model, const RetrievalStore* store, const DatasetBundle& data,
                               Split split, std::size_t batch_size) {
    const auto p = predict_split(model, store, data, split, batch_size);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.normalized.size(); ++i) {
        if (!p.valid[i]) continue;
        sum += std::abs(p.normalized[i] - p.target_norm[i]);
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

} // namespace rast
