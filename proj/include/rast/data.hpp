#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rast/config.hpp"
#include "rast/encoders.hpp"
#include "rast/tensor.hpp"

namespace rast {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Raw series, T x N x D_in row-major, plus the sensor graph.
struct SeriesData {
    std::size_t steps = 0;
    std::size_t nodes = 0;
    std::size_t channels = 0;
    std::vector<double> values;
    std::vector<std::string> channel_names;
    double null_val = 0.0;
    GraphSpec graph;

    double at(std::size_t t, std::size_t n, std::size_t d) const { return values[(t * nodes + n) * channels + d]; }
};

/// STB file: one JSON header line, then T*N*D_in little-endian float32
/// values. The graph lives next to it in `<stem>.adj.csv` unless the header
/// names another file under "adjacency".
SeriesData read_stb(const std::filesystem::path& path);
void write_stb(const std::filesystem::path& path, const SeriesData& data);

/// Edge-list CSV: a "# nodes=<N>" line, an optional "src,dst,weight" header,
/// then one edge per line.
GraphSpec read_adjacency_csv(const std::filesystem::path& path);
void write_adjacency_csv(const std::filesystem::path& path, const GraphSpec& graph);

/// synthetic:<kind>[:key=value,...] with kind in {sine, regime-switch, random-walk}.
/// Keys: N, T, D, seed, period, noise, nulls (fraction of planted null values).
struct SyntheticSpec {
    std::string kind = "sine";
    std::size_t nodes = 4;
    std::size_t steps = 1000;
    std::size_t channels = 3;
    std::uint64_t seed = 1;
    std::size_t period = 24;
    double noise = 0.01;
    double null_fraction = 0.0;
};

SyntheticSpec parse_synthetic_spec(const std::string& source);
bool is_synthetic_source(const std::string& source);
SeriesData generate_synthetic(const SyntheticSpec& spec);

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev; // 1 for constant channels
    std::vector<bool> constant;
};

struct Batch {
    Tensor x;                    // [B, L, N, D_in], normalized
    Tensor y;                    // [B, H, N, D_out], normalized
    std::vector<double> y_raw;   // same layout, original scale
    std::vector<std::uint8_t> valid;
};

class DatasetBundle {
public:
    DatasetBundle() = default;
    /// Windows the series and fits normalization on the train slice.
    DatasetBundle(SeriesData raw, const ModelConfig& model, const TrainConfig& train);

    const SeriesData& raw() const { return raw_; }
    const GraphSpec& graph() const { return raw_.graph; }
    const ChannelStats& stats() const { return stats_; }
    std::size_t input_len() const { return input_len_; }
    std::size_t output_len() const { return output_len_; }
    std::size_t output_dim() const { return output_dim_; }
    double null_val() const { return raw_.null_val; }

    std::size_t total_windows() const { return train_.size() + val_.size() + test_.size(); }
    const std::vector<std::size_t>& starts(Split s) const;
    /// First time step not covered by any train window.
    std::size_t train_end_time() const { return train_end_time_; }

    double normalize(double v, std::size_t channel) const;
    double denormalize(double v, std::size_t channel) const;
    /// Inverse transform for values laid out with D_out innermost.
    std::vector<double> denormalize_targets(std::span<const double> values) const;

    Batch batch(std::span<const std::size_t> starts) const;

private:
    SeriesData raw_;
    std::vector<double> normalized_;
    ChannelStats stats_;
    std::size_t input_len_ = 0;
    std::size_t output_len_ = 0;
    std::size_t output_dim_ = 0;
    std::size_t train_end_time_ = 0;
    std::vector<std::size_t> train_, val_, test_;
};

/// Dispatches on "synthetic:" prefixes, otherwise reads an STB file.
SeriesData load_series(const std::string& source);
DatasetBundle load_dataset(const std::string& source, const RunConfig& cfg);

} // namespace rast
