// rast: train, evaluate and inspect retrieval-augmented forecasters.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rast/bench.hpp"
#include "rast/checkpoint.hpp"
#include "rast/errors.hpp"
#include "rast/trainer.hpp"

namespace {

using namespace rast;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::int64_t seed = -1;
    std::string output_type;
    std::size_t max_epochs = 0;
    bool quiet = false;
};

struct EvalArgs {
    std::string ckpt;
    std::string split = "test";
    std::string data;
    std::string out;
};

struct BenchArgs {
    std::vector<std::size_t> sizes{1000, 8000};
    BenchOptions options;
    std::string out;
};

struct InspectArgs {
    std::string snapshot;
    std::int64_t epoch = -1;
    std::size_t bins = 10;
    bool json = false;
};

struct GenArgs {
    std::string spec;
    std::string out;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

int run_train(const TrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.output_type.empty()) cfg.model.output_type = output_type_from_string(a.output_type);
    if (a.max_epochs > 0) cfg.train.max_epochs = a.max_epochs;
    cfg.validate();
    const auto data = load_dataset(a.data, cfg);
    Trainer trainer(cfg, data);
    TrainOptions opts;
    opts.out_dir = a.out;
    opts.data_source = is_synthetic_source(a.data) ? a.data : std::filesystem::absolute(a.data).string();
    if (!a.quiet) opts.log = [](const std::string& s) { std::cerr << s << '\n'; };
    const auto result = trainer.fit(opts);
    nlohmann::json j{{"best_epoch", result.best_epoch},
                     {"epochs_run", result.epochs_run},
                     {"stopped_early", result.stopped_early},
                     {"store_events", result.events.size()},
                     {"val", result.val.to_json()},
                     {"test", result.test.to_json()}};
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_eval(const EvalArgs& a) {
    const auto split = split_from_string(a.split);
    auto run = load_checkpoint(a.ckpt, a.data);
    const auto* store = run.config.model.output_type == OutputType::QueryOnly ? nullptr : run.store.get();
    const auto m = evaluate(*run.model, store, run.data, split, run.config.train.batch_size);
    nlohmann::json j = m.to_json();
    j["split"] = a.split;
    j["output_type"] = to_string(run.config.model.output_type);
    const auto text = j.dump(2) + "\n";
    if (!a.out.empty()) write_text(a.out, text);
    std::cout << text;
    return 0;
}

int run_bench(BenchArgs a) {
    a.options.sizes = a.sizes;
    const auto rows = bench_store(a.options);
    const auto csv = bench_csv(rows);
    if (!a.out.empty()) write_text(a.out, csv);
    std::cout << csv;
    if (!ratio_decreasing(rows)) std::cerr << "warning: IVF/Flat latency ratio did not decrease with size\n";
    return 0;
}

std::vector<std::size_t> histogram(const std::vector<double>& v, double lo, double hi, std::size_t bins) {
    std::vector<std::size_t> h(bins, 0);
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    for (double x : v) {
        auto b = static_cast<std::size_t>((x - lo) / width);
        h[std::min(b, bins - 1)]++;
    }
    return h;
}

int run_inspect(const InspectArgs& a) {
    if (a.bins == 0) throw ConfigError("--bins must be positive");
    const auto bank = MemoryBank::load(a.snapshot);
    std::vector<double> omega, age;
    std::uint32_t newest = 0;
    for (std::uint32_t i = 0; i < bank.size(); ++i) newest = std::max(newest, bank.entry(i).epoch_stamp);
    const double now = a.epoch >= 0 ? static_cast<double>(a.epoch) : static_cast<double>(newest);
    for (std::uint32_t i = 0; i < bank.size(); ++i) {
        const auto e = bank.entry(i);
        omega.push_back(e.momentum);
        age.push_back(now - static_cast<double>(e.epoch_stamp));
    }
    const double w_lo = omega.empty() ? 0.0 : *std::min_element(omega.begin(), omega.end());
    const double w_hi = omega.empty() ? 0.0 : *std::max_element(omega.begin(), omega.end());
    const double a_lo = age.empty() ? 0.0 : *std::min_element(age.begin(), age.end());
    const double a_hi = age.empty() ? 0.0 : *std::max_element(age.begin(), age.end());
    const auto wh = histogram(omega, w_lo, w_hi, a.bins);
    const auto ah = histogram(age, a_lo, a_hi, a.bins);
    if (a.json) {
        nlohmann::json j{{"bank", to_string(bank.tag())},
                         {"dim", bank.dim()},
                         {"entries", bank.size()},
                         {"omega", {{"min", w_lo}, {"max", w_hi}, {"counts", wh}}},
                         {"age", {{"reference_epoch", now}, {"min", a_lo}, {"max", a_hi}, {"counts", ah}}}};
        std::cout << j.dump(2) << '\n';
        return 0;
    }
    std::cout << "bank: " << to_string(bank.tag()) << "\ndim: " << bank.dim() << "\nentries: " << bank.size() << '\n';
    if (bank.empty()) return 0;
    auto print = [&](const char* title, const std::vector<std::size_t>& h, double lo, double hi) {
        std::cout << title << " histogram [" << lo << ", " << hi << "]:\n";
        const double width = hi > lo ? (hi - lo) / static_cast<double>(a.bins) : 0.0;
        for (std::size_t b = 0; b < h.size(); ++b) {
            std::printf("  %12.6g  %zu\n", lo + width * static_cast<double>(b), h[b]);
        }
    };
    print("omega", wh, w_lo, w_hi);
    std::cout << "age reference epoch: " << now << '\n';
    print("age", ah, a_lo, a_hi);
    return 0;
}

int run_gen(const GenArgs& a) {
    const auto series = generate_synthetic(parse_synthetic_spec(a.spec));
    write_stb(a.out, series);
    std::cout << "wrote " << a.out << " (T=" << series.steps << ", N=" << series.nodes << ", D_in=" << series.channels
              << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented spatio-temporal forecasting"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a model and write a checkpoint directory");
    t->add_option("--config", train.config, "Run config (.json or .toml)");
    t->add_option("--data", train.data, "STB file or synthetic:<kind>[:key=value,...]")->required();
    t->add_option("--out", train.out, "Checkpoint directory")->required();
    t->add_option("--seed", train.seed, "Override the config seed");
    t->add_option("--output-type", train.output_type, "full, query_only, retrieval_only or no_mlp");
    t->add_option("--max-epochs", train.max_epochs, "Override train.max_epochs");
    t->add_flag("--quiet", train.quiet, "No per-epoch log");

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
    e->add_option("--ckpt", eval.ckpt, "Checkpoint directory")->required();
    e->add_option("--split", eval.split, "train, val or test");
    e->add_option("--data", eval.data, "Override the recorded data source");
    e->add_option("--out", eval.out, "Also write the JSON report here");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench-store", "Flat vs IVF query latency and recall");
    b->add_option("--sizes", bench.sizes, "Bank sizes")->delimiter(',');
    b->add_option("--dim", bench.options.dim, "Vector width");
    b->add_option("--clusters", bench.options.clusters, "Mixture components");
    b->add_option("--queries", bench.options.queries, "Queries per size");
    b->add_option("--k", bench.options.k, "Top-k");
    b->add_option("--repeats", bench.options.repeats, "Timing repeats (median is reported)");
    b->add_option("--seed", bench.options.seed, "Data seed");
    b->add_option("--out", bench.out, "Also write the CSV here");

    InspectArgs inspect;
    auto* i = app.add_subcommand("inspect-store", "Summarize a bank snapshot");
    i->add_option("--snapshot", inspect.snapshot, "Snapshot file")->required();
    i->add_option("--epoch", inspect.epoch, "Reference epoch for ages (default: newest stamp)");
    i->add_option("--bins", inspect.bins, "Histogram bins");
    i->add_flag("--json", inspect.json, "JSON output");

    GenArgs gen;
    auto* g = app.add_subcommand("gen-data", "Write a synthetic series as STB");
    g->add_option("--spec", gen.spec, "synthetic:<kind>[:key=value,...]")->required();
    g->add_option("--out", gen.out, "Output .stb path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*t) return run_train(train);
        if (*e) return run_eval(eval);
        if (*b) return run_bench(bench);
        if (*i) return run_inspect(inspect);
        if (*g) return run_gen(gen);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return kExitConfig;
    } catch (const DataError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kExitData;
    } catch (const FormatError& err) {
        std::cerr << "data error: " << err.what() << '\n';
        return kExitData;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}
