#include "rast/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rast/errors.hpp"

namespace rast {

using nlohmann::json;

std::string to_string(OutputType t) {
    switch (t) {
    case OutputType::Full: return "full";
    case OutputType::QueryOnly: return "query_only";
    case OutputType::RetrievalOnly: return "retrieval_only";
    case OutputType::NoMlp: return "no_mlp";
    }
    return "full";
}

OutputType output_type_from_string(const std::string& s) {
    if (s == "full") return OutputType::Full;
    if (s == "query_only") return OutputType::QueryOnly;
    if (s == "retrieval_only") return OutputType::RetrievalOnly;
    if (s == "no_mlp") return OutputType::NoMlp;
    throw ConfigError("unknown output_type '" + s + "' (expected full, query_only, retrieval_only, no_mlp)");
}

std::string to_string(IndexKind k) { return k == IndexKind::Flat ? "flat" : "ivf"; }

namespace {

IndexKind index_kind_from_string(const std::string& s) {
    if (s == "flat") return IndexKind::Flat;
    if (s == "ivf") return IndexKind::Ivf;
    throw ConfigError("unknown index kind '" + s + "' (expected flat or ivf)");
}

std::string to_string(TemporalConvKind k) { return k == TemporalConvKind::Conv2d ? "conv2d" : "conv1d_dilated"; }

TemporalConvKind temporal_conv_from_string(const std::string& s) {
    if (s == "conv2d") return TemporalConvKind::Conv2d;
    if (s == "conv1d_dilated") return TemporalConvKind::Conv1dDilated;
    throw ConfigError("unknown temporal_conv '" + s + "' (expected conv2d or conv1d_dilated)");
}

std::string to_string(EmbeddingNorm n) { return n == EmbeddingNorm::LayerNorm ? "layer_norm" : "identity"; }

EmbeddingNorm embedding_norm_from_string(const std::string& s) {
    if (s == "layer_norm") return EmbeddingNorm::LayerNorm;
    if (s == "identity") return EmbeddingNorm::Identity;
    throw ConfigError("unknown embedding_norm '" + s + "' (expected layer_norm or identity)");
}

// Pulls typed fields out of one JSON object and refuses anything left over.
class SectionReader {
public:
    SectionReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
        if (!j_.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint32_t> ||
                          std::is_same_v<T, std::uint64_t>) {
                if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigError("expected a number");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("expected a boolean");
            }
            out = it->get<T>();
        } catch (const ConfigError& e) {
            throw ConfigError(section_ + "." + key + ": " + e.what());
        } catch (const json::exception& e) {
            throw ConfigError(section_ + "." + key + ": " + e.what());
        }
    }

    template <typename Enum, typename Parse>
    void get_enum(const char* key, Enum& out, Parse parse) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_string()) throw ConfigError(section_ + "." + key + ": expected a string");
        out = parse(it->get<std::string>());
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + section_ + "." + it.key() + "'");
        }
    }

private:
    const json& j_;
    std::string section_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

} // namespace

std::size_t ModelConfig::mlp_hidden(std::size_t width) const {
    const auto h = static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(width)));
    return h == 0 ? 1 : h;
}

void ModelConfig::validate() const {
    require(input_len >= 1 && output_len >= 1, "model: input_len and output_len must be positive");
    require(input_dim >= 1 && output_dim >= 1, "model: input_dim and output_dim must be positive");
    require(query_dim >= 1 && retrieval_dim >= 1, "model: query_dim and retrieval_dim must be positive");
    require(decoupled_layers == 1, "model: only decoupled_layers = 1 is supported");
    require(n_heads >= 1 && retrieval_dim % n_heads == 0,
            "model: n_heads (" + std::to_string(n_heads) + ") must divide retrieval_dim (" +
                std::to_string(retrieval_dim) + ")");
    require(top_k >= 1, "model: top_k must be at least 1");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must be in [0, 1)");
    require(attn_dropout >= 0.0 && attn_dropout < 1.0, "model: attn_dropout must be in [0, 1)");
    require(mlp_ratio > 0.0, "model: mlp_ratio must be positive");
    if (temporal_conv == TemporalConvKind::Conv1dDilated) {
        require(conv1d_kernel >= 1 && conv1d_dilation >= 1, "model: conv1d kernel and dilation must be positive");
        require(conv1d_dilation * (conv1d_kernel - 1) + 1 <= input_len,
                "model: dilated temporal kernel exceeds input_len");
    }
}

void StorePolicy::validate() const {
    require(capacity >= 1, "store: capacity must be positive");
    require(tau > 0.0, "store: tau must be positive");
    require(prune_threshold >= 0.0 && prune_threshold <= 1.0, "store: prune_threshold must be in [0, 1]");
    require(blend_threshold > 0.0 && blend_threshold <= 1.0, "store: blend_threshold must be in (0, 1]");
    require(blend_rate_min > 0.0 && blend_rate_min <= blend_rate_max && blend_rate_max <= 1.0,
            "store: need 0 < blend_rate_min <= blend_rate_max <= 1");
    require(lru_capacity >= 1, "store: lru_capacity must be positive");
    require(update_sample >= 1, "store: update_sample must be positive");
    require(kmeans_iters >= 1, "store: kmeans_iters must be positive");
}

void TrainConfig::validate() const {
    require(batch_size >= 1, "train: batch_size must be positive");
    require(learning_rate > 0.0, "train: learning_rate must be positive");
    require(eps > 0.0, "train: eps must be positive");
    require(weight_decay >= 0.0, "train: weight_decay must be non-negative");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: Adam betas must be in [0, 1)");
    require(gamma > 0.0, "train: gamma must be positive");
    require(max_norm > 0.0, "train: max_norm must be positive");
    require(update_interval >= 1, "train: update_interval must be positive");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
        require(milestones[i - 1] < milestones[i], "train: milestones must be strictly increasing");
    }
    require(train_ratio.size() == 3, "train: train_ratio needs three fractions");
    double total = 0.0;
    for (double r : train_ratio) {
        require(r > 0.0, "train: train_ratio entries must be positive");
        total += r;
    }
    require(std::abs(total - 1.0) < 1e-9, "train: train_ratio must sum to 1");
}

void RunConfig::validate() const {
    model.validate();
    store.validate();
    train.validate();
}

json to_json(const RunConfig& c) {
    const auto& m = c.model;
    const auto& s = c.store;
    const auto& t = c.train;
    return json{
        {"seed", c.seed},
        {"model",
         {{"num_nodes", m.num_nodes},
          {"input_len", m.input_len},
          {"output_len", m.output_len},
          {"input_dim", m.input_dim},
          {"output_dim", m.output_dim},
          {"query_dim", m.query_dim},
          {"retrieval_dim", m.retrieval_dim},
          {"decoupled_layers", m.decoupled_layers},
          {"generator_layers", m.generator_layers},
          {"dropout", m.dropout},
          {"attn_dropout", m.attn_dropout},
          {"mlp_ratio", m.mlp_ratio},
          {"output_type", to_string(m.output_type)},
          {"n_heads", m.n_heads},
          {"top_k", m.top_k},
          {"temporal_conv", to_string(m.temporal_conv)},
          {"conv1d_kernel", m.conv1d_kernel},
          {"conv1d_dilation", m.conv1d_dilation},
          {"embedding_norm", to_string(m.embedding_norm)}}},
        {"store",
         {{"capacity", s.capacity},
          {"decay_epochs", s.decay_epochs},
          {"prune_threshold", s.prune_threshold},
          {"blend_threshold", s.blend_threshold},
          {"blend_rate_min", s.blend_rate_min},
          {"blend_rate_max", s.blend_rate_max},
          {"lambda_div", s.lambda_div},
          {"tau", s.tau},
          {"lru_capacity", s.lru_capacity},
          {"recent_query_cap", s.recent_query_cap},
          {"update_sample", s.update_sample},
          {"index_kind", to_string(s.index_kind)},
          {"n_list", s.n_list},
          {"n_probe", s.n_probe},
          {"kmeans_iters", s.kmeans_iters}}},
        {"train",
         {{"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"max_epochs", t.max_epochs},
          {"weight_decay", t.weight_decay},
          {"eps", t.eps},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"milestones", t.milestones},
          {"gamma", t.gamma},
          {"warm_epochs", t.warm_epochs},
          {"cl_epochs", t.cl_epochs},
          {"max_norm", t.max_norm},
          {"update_interval", t.update_interval},
          {"patience", t.patience},
          {"null_val", t.null_val},
          {"train_ratio", t.train_ratio},
          {"norm_each_channel", t.norm_each_channel},
          {"rescale", t.rescale}}},
    };
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    {
        SectionReader top(j, "config");
        top.get("seed", c.seed);
    }
    const json empty = json::object();
    auto section = [&](const char* name) -> const json& {
        auto it = j.find(name);
        return it == j.end() ? empty : *it;
    };

    {
        auto& m = c.model;
        SectionReader r(section("model"), "model");
        r.get("num_nodes", m.num_nodes);
        r.get("input_len", m.input_len);
        r.get("output_len", m.output_len);
        r.get("input_dim", m.input_dim);
        r.get("output_dim", m.output_dim);
        r.get("query_dim", m.query_dim);
        r.get("retrieval_dim", m.retrieval_dim);
        r.get("decoupled_layers", m.decoupled_layers);
        r.get("generator_layers", m.generator_layers);
        r.get("dropout", m.dropout);
        r.get("attn_dropout", m.attn_dropout);
        r.get("mlp_ratio", m.mlp_ratio);
        r.get_enum("output_type", m.output_type, output_type_from_string);
        r.get("n_heads", m.n_heads);
        r.get("top_k", m.top_k);
        r.get_enum("temporal_conv", m.temporal_conv, temporal_conv_from_string);
        r.get("conv1d_kernel", m.conv1d_kernel);
        r.get("conv1d_dilation", m.conv1d_dilation);
        r.get_enum("embedding_norm", m.embedding_norm, embedding_norm_from_string);
        r.finish();
    }
    {
        auto& s = c.store;
        SectionReader r(section("store"), "store");
        r.get("capacity", s.capacity);
        r.get("decay_epochs", s.decay_epochs);
        r.get("prune_threshold", s.prune_threshold);
        r.get("blend_threshold", s.blend_threshold);
        r.get("blend_rate_min", s.blend_rate_min);
        r.get("blend_rate_max", s.blend_rate_max);
        r.get("lambda_div", s.lambda_div);
        r.get("tau", s.tau);
        r.get("lru_capacity", s.lru_capacity);
        r.get("recent_query_cap", s.recent_query_cap);
        r.get("update_sample", s.update_sample);
        r.get_enum("index_kind", s.index_kind, index_kind_from_string);
        r.get("n_list", s.n_list);
        r.get("n_probe", s.n_probe);
        r.get("kmeans_iters", s.kmeans_iters);
        r.finish();
    }
    {
        auto& t = c.train;
        SectionReader r(section("train"), "train");
        r.get("batch_size", t.batch_size);
        r.get("learning_rate", t.learning_rate);
        r.get("max_epochs", t.max_epochs);
        r.get("weight_decay", t.weight_decay);
        r.get("eps", t.eps);
        r.get("beta1", t.beta1);
        r.get("beta2", t.beta2);
        r.get("milestones", t.milestones);
        r.get("gamma", t.gamma);
        r.get("warm_epochs", t.warm_epochs);
        r.get("cl_epochs", t.cl_epochs);
        r.get("max_norm", t.max_norm);
        r.get("update_interval", t.update_interval);
        r.get("patience", t.patience);
        r.get("null_val", t.null_val);
        r.get("train_ratio", t.train_ratio);
        r.get("norm_each_channel", t.norm_each_channel);
        r.get("rescale", t.rescale);
        r.finish();
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k != "seed" && k != "model" && k != "store" && k != "train") {
            throw ConfigError("unknown config key '" + k + "'");
        }
    }
    c.validate();
    return c;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' || line[i] == '\'') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

json parse_toml_scalar(const std::string& raw, std::size_t line_no) {
    const auto v = trim(raw);
    auto fail = [&] { return ConfigError("toml line " + std::to_string(line_no) + ": cannot parse value '" + v + "'"); };
    if (v.empty()) throw fail();
    if (v.front() == '"' || v.front() == '\'') {
        if (v.size() < 2 || v.back() != v.front()) throw fail();
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    const bool is_float = v.find_first_of(".eE") != std::string::npos;
    try {
        std::size_t used = 0;
        if (is_float) {
            const double d = std::stod(v, &used);
            if (used != v.size()) throw fail();
            return d;
        }
        if (v.front() == '-') {
            const long long i = std::stoll(v, &used);
            if (used != v.size()) throw fail();
            return i;
        }
        const unsigned long long u = std::stoull(v, &used);
        if (used != v.size()) throw fail();
        return u;
    } catch (const std::logic_error&) {
        throw fail();
    }
}

} // namespace

json parse_simple_toml(const std::string& text) {
    json root = json::object();
    json* current = &root;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("toml line " + std::to_string(line_no) + ": bad section header");
            const auto name = trim(line.substr(1, line.size() - 2));
            if (name.empty() || root.contains(name)) {
                throw ConfigError("toml line " + std::to_string(line_no) + ": empty or repeated section");
            }
            root[name] = json::object();
            current = &root[name];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("toml line " + std::to_string(line_no) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("toml line " + std::to_string(line_no) + ": empty key");
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') throw ConfigError("toml line " + std::to_string(line_no) + ": arrays must be on one line");
            json arr = json::array();
            std::stringstream items(value.substr(1, value.size() - 2));
            std::string item;
            while (std::getline(items, item, ',')) {
                if (!trim(item).empty()) arr.push_back(parse_toml_scalar(item, line_no));
            }
            (*current)[key] = arr;
        } else {
            (*current)[key] = parse_toml_scalar(value, line_no);
        }
    }
    return root;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    json j;
    if (path.extension() == ".toml") {
        j = parse_simple_toml(buf.str());
    } else {
        try {
            j = json::parse(buf.str());
        } catch (const json::exception& e) {
            throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
        }
    }
    return run_config_from_json(j);
}

} // namespace rast
