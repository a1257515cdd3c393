#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace rast {

enum class OutputType { Full, QueryOnly, RetrievalOnly, NoMlp };
enum class TemporalConvKind { Conv2d, Conv1dDilated };
enum class EmbeddingNorm { LayerNorm, Identity };
enum class IndexKind { Flat, Ivf };

std::string to_string(OutputType t);
OutputType output_type_from_string(const std::string& s);
std::string to_string(IndexKind k);

struct ModelConfig {
    std::size_t num_nodes = 0; // taken from the dataset when 0
    std::size_t input_len = 12;
    std::size_t output_len = 12;
    std::size_t input_dim = 3;
    std::size_t output_dim = 1;

    std::size_t query_dim = 256;
    std::size_t retrieval_dim = 128;
    std::size_t decoupled_layers = 1;
    std::size_t generator_layers = 3;
    double dropout = 0.1;
    double attn_dropout = 0.1;
    double mlp_ratio = 4.0;
    OutputType output_type = OutputType::Full;

    std::size_t n_heads = 4;
    std::size_t top_k = 5;

    TemporalConvKind temporal_conv = TemporalConvKind::Conv2d;
    std::size_t conv1d_kernel = 3;
    std::size_t conv1d_dilation = 2;
    EmbeddingNorm embedding_norm = EmbeddingNorm::LayerNorm;

    /// Width of each decoupled embedding (E_sp, E_tp). Bank vectors share it.
    std::size_t embedding_dim() const { return retrieval_dim; }
    std::size_t fused_dim() const { return query_dim + retrieval_dim; }
    std::size_t mlp_hidden(std::size_t width) const;

    void validate() const;
};

struct StorePolicy {
    std::size_t capacity = 1000;
    std::uint32_t decay_epochs = 50;
    double prune_threshold = 0.3;
    double blend_threshold = 0.5;
    double blend_rate_min = 0.05;
    double blend_rate_max = 0.95;
    double lambda_div = 0.5;
    double tau = 0.1;
    std::size_t lru_capacity = 1024;
    std::size_t recent_query_cap = 4096;
    std::size_t update_sample = 512;
    IndexKind index_kind = IndexKind::Ivf;
    std::size_t n_list = 0;  // 0: ceil(sqrt(M))
    std::size_t n_probe = 0; // 0: ceil(n_list / 4)
    std::size_t kmeans_iters = 20;

    void validate() const;
};

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 0.002;
    std::size_t max_epochs = 300;
    double weight_decay = 1e-5;
    double eps = 1e-8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::vector<std::size_t> milestones{1, 30, 38, 46, 54, 62, 70, 80};
    double gamma = 0.5;
    std::size_t warm_epochs = 30;
    std::size_t cl_epochs = 3;
    double max_norm = 5.0;
    std::size_t update_interval = 10;
    std::size_t patience = 30;
    double null_val = 0.0;
    std::vector<double> train_ratio{0.7, 0.1, 0.2};
    bool norm_each_channel = true;
    bool rescale = true;

    void validate() const;
};

struct RunConfig {
    ModelConfig model;
    StorePolicy store;
    TrainConfig train;
    std::uint64_t seed = 42;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Rejects unknown keys and wrong types with ConfigError. Missing keys keep defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
/// Loads a .json file, or a flat-table .toml file with the same sections.
RunConfig load_run_config(const std::filesystem::path& path);

/// Minimal TOML reader for configuration files: [section] headers,
/// key = value with numbers, booleans, quoted strings and flat arrays.
nlohmann::json parse_simple_toml(const std::string& text);

} // namespace rast
