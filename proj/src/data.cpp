#include "rast/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rast/binary_io.hpp"
#include "rast/errors.hpp"

namespace rast {

std::string to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

namespace {

constexpr std::uint32_t kStbVersion = 1;

std::filesystem::path default_adjacency_path(const std::filesystem::path& stb) {
    auto p = stb;
    p.replace_extension(".adj.csv");
    return p;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

GraphSpec read_adjacency_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open adjacency file " + path.string());
    std::string line;
    std::size_t nodes = 0;
    bool have_nodes = false;
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find("nodes=");
            if (eq != std::string::npos) {
                nodes = std::stoul(line.substr(eq + 6));
                have_nodes = true;
            }
            continue;
        }
        if (line.rfind("src", 0) == 0) continue;
        std::stringstream ss(line);
        std::string a, b, w;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, w, ',')) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected src,dst,weight");
        }
        try {
            edges.emplace_back(std::stoul(a), std::stoul(b), std::stod(w));
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed edge '" + line + "'");
        }
    }
    if (!have_nodes) throw DataError(path.string() + ": missing '# nodes=<N>' header");
    for (const auto& [s, d, w] : edges) {
        if (s >= nodes || d >= nodes) {
            throw DataError(path.string() + ": edge " + std::to_string(s) + "->" + std::to_string(d) +
                            " outside " + std::to_string(nodes) + " nodes");
        }
    }
    try {
        return GraphSpec::from_edges(nodes, edges);
    } catch (const std::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_adjacency_csv(const std::filesystem::path& path, const GraphSpec& graph) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    const auto n = graph.num_nodes();
    out << "# nodes=" << n << "\nsrc,dst,weight\n";
    out.precision(17);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (graph.weight(i, j) != 0.0) out << i << ',' << j << ',' << graph.weight(i, j) << '\n';
        }
    }
}

SeriesData read_stb(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    const auto nl = std::find(bytes.begin(), bytes.end(), static_cast<unsigned char>('\n'));
    if (nl == bytes.end()) throw FormatError("STB header line is not terminated", bytes.size());
    const std::size_t header_len = static_cast<std::size_t>(nl - bytes.begin());
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(std::string(bytes.begin(), nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("STB header is not JSON: ") + e.what(), 0);
    }
    SeriesData d;
    try {
        const auto version = h.at("version").get<std::uint32_t>();
        if (version != kStbVersion) throw FormatError("unsupported STB version " + std::to_string(version), 0);
        d.steps = h.at("T").get<std::size_t>();
        d.nodes = h.at("N").get<std::size_t>();
        d.channels = h.at("D_in").get<std::size_t>();
        d.null_val = h.value("null_val", 0.0);
        if (h.contains("channels")) d.channel_names = h.at("channels").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad STB header: ") + e.what(), 0);
    }
    if (!d.channel_names.empty() && d.channel_names.size() != d.channels) {
        throw FormatError("STB header lists " + std::to_string(d.channel_names.size()) + " channel names for D_in=" +
                              std::to_string(d.channels),
                          0);
    }
    const std::size_t count = d.steps * d.nodes * d.channels;
    const std::size_t payload = bytes.size() - header_len - 1;
    if (payload != count * 4) {
        throw FormatError("STB payload has " + std::to_string(payload) + " bytes, header declares " +
                              std::to_string(count * 4),
                          header_len + 1 + std::min(payload, count * 4));
    }
    ByteReader r(bytes);
    r.bytes(header_len + 1, "header");
    d.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double v = r.f32("payload");
        if (std::isnan(v)) {
            const auto t = i / (d.nodes * d.channels), n = (i / d.channels) % d.nodes, c = i % d.channels;
            throw DataError("NaN in STB payload at index " + std::to_string(i) + " (t=" + std::to_string(t) +
                            ", node=" + std::to_string(n) + ", channel=" + std::to_string(c) + ")");
        }
        d.values[i] = v;
    }
    auto adj = default_adjacency_path(path);
    if (h.contains("adjacency")) adj = path.parent_path() / h["adjacency"].get<std::string>();
    if (std::filesystem::exists(adj)) {
        d.graph = read_adjacency_csv(adj);
        if (d.graph.num_nodes() != d.nodes) {
            throw DataError("adjacency has " + std::to_string(d.graph.num_nodes()) + " nodes, series has " +
                            std::to_string(d.nodes));
        }
    } else {
        d.graph = GraphSpec::isolated(d.nodes);
    }
    return d;
}

void write_stb(const std::filesystem::path& path, const SeriesData& d) {
    if (d.values.size() != d.steps * d.nodes * d.channels) {
        throw ShapeError("series holds " + std::to_string(d.values.size()) + " values for T*N*D=" +
                         std::to_string(d.steps * d.nodes * d.channels));
    }
    nlohmann::json h{{"version", kStbVersion}, {"T", d.steps},           {"N", d.nodes},
                     {"D_in", d.channels},     {"null_val", d.null_val}, {"channels", d.channel_names}};
    ByteWriter w;
    w.bytes(h.dump());
    w.u8('\n');
    for (double v : d.values) w.f32(static_cast<float>(v));
    write_file_atomic(path, w.buffer());
    if (d.graph.num_nodes() == d.nodes) write_adjacency_csv(default_adjacency_path(path), d.graph);
}

bool is_synthetic_source(const std::string& source) { return source.rfind("synthetic:", 0) == 0; }

SyntheticSpec parse_synthetic_spec(const std::string& source) {
    if (!is_synthetic_source(source)) throw ConfigError("not a synthetic source: '" + source + "'");
    SyntheticSpec s;
    auto rest = source.substr(10);
    const auto colon = rest.find(':');
    s.kind = rest.substr(0, colon);
    if (s.kind != "sine" && s.kind != "regime-switch" && s.kind != "random-walk") {
        throw ConfigError("unknown synthetic generator '" + s.kind + "'");
    }
    if (colon == std::string::npos) return s;
    std::stringstream ss(rest.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("synthetic option '" + kv + "' is not key=value");
        const auto key = trim(kv.substr(0, eq));
        const auto val = trim(kv.substr(eq + 1));
        try {
            if (key == "N") s.nodes = std::stoul(val);
            else if (key == "T") s.steps = std::stoul(val);
            else if (key == "D") s.channels = std::stoul(val);
            else if (key == "seed") s.seed = std::stoull(val);
            else if (key == "period") s.period = std::stoul(val);
            else if (key == "noise") s.noise = std::stod(val);
            else if (key == "nulls") s.null_fraction = std::stod(val);
            else throw ConfigError("unknown synthetic option '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("bad value for synthetic option '" + key + "': '" + val + "'");
        }
    }
    if (s.nodes == 0 || s.steps == 0) throw ConfigError("synthetic series needs N > 0 and T > 0");
    if (s.channels < 1 || s.channels > 3) throw ConfigError("synthetic series supports D in 1..3");
    if (s.period < 2) throw ConfigError("synthetic period must be at least 2");
    if (s.null_fraction < 0.0 || s.null_fraction >= 1.0) throw ConfigError("nulls must lie in [0, 1)");
    return s;
}

SeriesData generate_synthetic(const SyntheticSpec& s) {
    SeriesData d;
    d.steps = s.steps;
    d.nodes = s.nodes;
    d.channels = s.channels;
    d.null_val = 0.0;
    d.channel_names = {"value", "time_of_day", "day_of_week"};
    d.channel_names.resize(s.channels);
    d.values.assign(s.steps * s.nodes * s.channels, 0.0);

    Rng rng(s.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    const double period = static_cast<double>(s.period);

    std::vector<double> amp(s.nodes), phase(s.nodes);
    for (std::size_t n = 0; n < s.nodes; ++n) {
        amp[n] = 0.5 + unif(rng);
        phase[n] = two_pi * static_cast<double>(n) / static_cast<double>(s.nodes);
    }

    for (std::size_t n = 0; n < s.nodes; ++n) {
        int regime = unif(rng) < 0.5 ? 0 : 1;
        double walk = 3.0;
        // Regime durations are geometric with mean four periods.
        const double switch_p = 1.0 / (4.0 * period);
        for (std::size_t t = 0; t < s.steps; ++t) {
            const double tt = static_cast<double>(t);
            double v = 0.0;
            if (s.kind == "sine") {
                v = 3.0 + amp[n] * std::sin(two_pi * tt / period + phase[n]);
            } else if (s.kind == "regime-switch") {
                if (unif(rng) < switch_p) regime = 1 - regime;
                if (regime == 0) {
                    v = 3.0 + amp[n] * std::sin(two_pi * tt / period + phase[n]);
                } else {
                    const double frac = std::fmod(2.0 * tt / period + phase[n] / two_pi, 1.0);
                    v = 2.5 + 1.2 * amp[n] * (frac < 0.5 ? 2.0 * frac : 2.0 - 2.0 * frac);
                }
            } else {
                walk += 0.1 * gauss(rng);
                v = walk;
            }
            v += s.noise * amp[n] * gauss(rng);
            d.values[(t * s.nodes + n) * s.channels] = v;
            if (s.channels > 1) {
                d.values[(t * s.nodes + n) * s.channels + 1] = std::fmod(tt, period) / period;
            }
            if (s.channels > 2) {
                d.values[(t * s.nodes + n) * s.channels + 2] =
                    static_cast<double>((t / s.period) % 7) / 7.0;
            }
        }
    }
    if (s.null_fraction > 0.0) {
        for (std::size_t i = 0; i < s.steps * s.nodes; ++i) {
            if (unif(rng) < s.null_fraction) d.values[i * s.channels] = d.null_val;
        }
    }
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (std::size_t n = 0; s.nodes > 1 && n < s.nodes; ++n) {
        edges.emplace_back(n, (n + 1) % s.nodes, 1.0);
        edges.emplace_back((n + 1) % s.nodes, n, 1.0);
    }
    d.graph = GraphSpec::from_edges(s.nodes, edges);
    return d;
}

SeriesData load_series(const std::string& source) {
    if (is_synthetic_source(source)) return generate_synthetic(parse_synthetic_spec(source));
    if (!std::filesystem::exists(source)) throw DataError("data file not found: " + source);
    return read_stb(source);
}

DatasetBundle::DatasetBundle(SeriesData raw, const ModelConfig& model, const TrainConfig& train)
    : raw_(std::move(raw)), input_len_(model.input_len), output_len_(model.output_len),
      output_dim_(model.output_dim) {
    if (raw_.values.size() != raw_.steps * raw_.nodes * raw_.channels) throw DataError("series size mismatch");
    if (output_dim_ > raw_.channels) {
        throw ConfigError("output_dim " + std::to_string(output_dim_) + " exceeds the " +
                          std::to_string(raw_.channels) + " data channels");
    }
    for (double v : raw_.values) {
        if (!std::isfinite(v)) throw DataError("series contains non-finite values");
    }
    const std::size_t span = input_len_ + output_len_;
    if (raw_.steps < span) {
        throw DataError("series has " + std::to_string(raw_.steps) + " steps, a window needs " + std::to_string(span));
    }
    const std::size_t windows = raw_.steps - span + 1;
    const auto n_train = static_cast<std::size_t>(std::floor(train.train_ratio[0] * static_cast<double>(windows)));
    const auto n_val = static_cast<std::size_t>(std::floor(train.train_ratio[1] * static_cast<double>(windows)));
    if (n_train == 0) throw DataError("no train windows: " + std::to_string(windows) + " windows in total");
    for (std::size_t s = 0; s < windows; ++s) {
        if (s < n_train) train_.push_back(s);
        else if (s < n_train + n_val) val_.push_back(s);
        else test_.push_back(s);
    }
    train_end_time_ = n_train - 1 + span;

    const std::size_t c_count = raw_.channels;
    stats_.mean.assign(c_count, 0.0);
    stats_.stddev.assign(c_count, 1.0);
    stats_.constant.assign(c_count, false);
    if (train.rescale) {
        // Null sentinels only mark target channels; auxiliary channels use every step.
        auto is_valid = [&](double v, std::size_t c) { return c >= output_dim_ || v != raw_.null_val; };
        auto fit = [&](const std::vector<std::size_t>& chans) {
            double sum = 0.0, count = 0.0;
            for (std::size_t t = 0; t < train_end_time_; ++t) {
                for (std::size_t n = 0; n < raw_.nodes; ++n) {
                    for (auto c : chans) {
                        const double v = raw_.at(t, n, c);
                        if (!is_valid(v, c)) continue;
                        sum += v;
                        count += 1.0;
                    }
                }
            }
            const double mu = count > 0.0 ? sum / count : 0.0;
            double ss = 0.0;
            for (std::size_t t = 0; t < train_end_time_; ++t) {
                for (std::size_t n = 0; n < raw_.nodes; ++n) {
                    for (auto c : chans) {
                        const double v = raw_.at(t, n, c);
                        if (is_valid(v, c)) ss += (v - mu) * (v - mu);
                    }
                }
            }
            const double sd = count > 0.0 ? std::sqrt(ss / count) : 0.0;
            for (auto c : chans) {
                stats_.mean[c] = mu;
                stats_.constant[c] = sd < 1e-12;
                stats_.stddev[c] = stats_.constant[c] ? 1.0 : sd;
            }
        };
        if (train.norm_each_channel) {
            for (std::size_t c = 0; c < c_count; ++c) fit({c});
        } else {
            std::vector<std::size_t> all(c_count);
            for (std::size_t c = 0; c < c_count; ++c) all[c] = c;
            fit(all);
        }
    }
    normalized_.resize(raw_.values.size());
    for (std::size_t i = 0; i < raw_.values.size(); ++i) normalized_[i] = normalize(raw_.values[i], i % c_count);
}

const std::vector<std::size_t>& DatasetBundle::starts(Split s) const {
    switch (s) {
    case Split::Train: return train_;
    case Split::Val: return val_;
    case Split::Test: return test_;
    }
    return train_;
}

double DatasetBundle::normalize(double v, std::size_t c) const { return (v - stats_.mean[c]) / stats_.stddev[c]; }

double DatasetBundle::denormalize(double v, std::size_t c) const { return v * stats_.stddev[c] + stats_.mean[c]; }

std::vector<double> DatasetBundle::denormalize_targets(std::span<const double> values) const {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = denormalize(values[i], i % output_dim_);
    return out;
}

Batch DatasetBundle::batch(std::span<const std::size_t> starts) const {
    const std::size_t b = starts.size(), n = raw_.nodes, d = raw_.channels;
    const std::size_t l = input_len_, h = output_len_, o = output_dim_;
    std::vector<double> x(b * l * n * d), y(b * h * n * o);
    Batch out;
    out.y_raw.resize(y.size());
    out.valid.resize(y.size());
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t s = starts[i];
        const double* src = normalized_.data() + s * n * d;
        std::copy(src, src + l * n * d, x.data() + i * l * n * d);
        for (std::size_t t = 0; t < h; ++t) {
            for (std::size_t node = 0; node < n; ++node) {
                for (std::size_t c = 0; c < o; ++c) {
                    const std::size_t from = ((s + l + t) * n + node) * d + c;
                    const std::size_t to = ((i * h + t) * n + node) * o + c;
                    y[to] = normalized_[from];
                    out.y_raw[to] = raw_.values[from];
                    out.valid[to] = raw_.values[from] != raw_.null_val ? 1 : 0;
                }
            }
        }
    }
    out.x = Tensor::from({b, l, n, d}, std::move(x));
    out.y = Tensor::from({b, h, n, o}, std::move(y));
    return out;
}

DatasetBundle load_dataset(const std::string& source, const RunConfig& cfg) {
    auto series = load_series(source);
    return DatasetBundle(std::move(series), cfg.model, cfg.train);
}

} // namespace rast
