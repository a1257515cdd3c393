#include "rast/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "rast/binary_io.hpp"
#include "rast/errors.hpp"

namespace rast {

namespace {

constexpr char kParamMagic[] = "RASTPARM";
constexpr std::uint32_t kParamVersion = 1;

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what(), 0);
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    const auto text = j.dump(2) + "\n";
    write_file_atomic(path, std::vector<unsigned char>(text.begin(), text.end()));
}

} // namespace

void save_parameters(const std::filesystem::path& path, const ParameterList& params) {
    ByteWriter w;
    w.bytes(std::string_view(kParamMagic, 8));
    w.u32(kParamVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name);
        const auto& shape = p.tensor.shape();
        w.u8(static_cast<std::uint8_t>(shape.size()));
        for (auto e : shape) w.u64(e);
        for (double v : p.tensor.data()) w.f64(v);
    }
    w.crc_trailer();
    write_file_atomic(path, w.buffer());
}

void load_parameters(const std::filesystem::path& path, ParameterList& params) {
    const auto buf = read_file_bytes(path);
    ByteReader r(buf);
    if (r.bytes(8, "magic") != std::string_view(kParamMagic, 8)) throw FormatError("not a parameter file", 0);
    const auto version_at = r.offset();
    if (r.u32("version") != kParamVersion) throw FormatError("unsupported parameter file version", version_at);
    r.verify_crc_trailer();
    const auto count = r.u32("count");
    std::map<std::string, NamedParameter*> by_name;
    for (auto& p : params) by_name[p.name] = &p;
    std::size_t matched = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto at = r.offset();
        const auto len = r.u16("name length");
        const auto name = r.bytes(len, "name");
        const auto rank = r.u8("rank");
        Shape shape(rank);
        for (auto& e : shape) e = r.u64("extent");
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint tensor '" + name + "' is not a model parameter", at);
        auto& t = it->second->tensor;
        if (t.shape() != shape) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                                  shape_str(t.shape()),
                              at);
        }
        auto dst = t.mutable_data();
        for (auto& v : dst) v = r.f64("values");
        ++matched;
    }
    if (matched != params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(matched) + " of " + std::to_string(params.size()) +
                              " model parameters",
                          r.offset());
    }
}

std::uint64_t store_seed(const RunConfig& cfg) { return cfg.seed * 2654435761ULL + 17; }

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& data_source,
                     const DatasetBundle& data, const RastModel& model, const RetrievalStore& store) {
    std::filesystem::create_directories(dir);
    write_json(dir / "config.json", to_json(cfg));
    write_json(dir / "data.json", {{"source", data_source},
                                   {"mean", data.stats().mean},
                                   {"stddev", data.stats().stddev},
                                   {"nodes", data.graph().num_nodes()}});
    save_parameters(dir / "params.bin", model.parameters());
    store.spatial.save(dir / "spatial.bank");
    store.temporal.save(dir / "temporal.bank");
}

LoadedRun load_checkpoint(const std::filesystem::path& dir, const std::string& data_source) {
    if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
    LoadedRun run;
    run.config = run_config_from_json(read_json(dir / "config.json"));
    const auto meta = read_json(dir / "data.json");
    run.data_source = data_source.empty() ? meta.at("source").get<std::string>() : data_source;
    run.data = load_dataset(run.data_source, run.config);
    if (meta.at("nodes").get<std::size_t>() != run.data.graph().num_nodes()) {
        throw DataError("checkpoint was trained on " + std::to_string(meta.at("nodes").get<std::size_t>()) +
                        " nodes, dataset has " + std::to_string(run.data.graph().num_nodes()));
    }
    Rng rng(run.config.seed);
    run.model = std::make_unique<RastModel>(run.config.model, run.data.graph(), rng);
    auto params = run.model->parameters();
    load_parameters(dir / "params.bin", params);
    const auto seed = store_seed(run.config);
    run.store = std::make_unique<RetrievalStore>(run.config.model.retrieval_dim, run.config.store, seed);
    run.store->spatial = MemoryBank::load(dir / "spatial.bank", run.config.store, seed);
    run.store->temporal = MemoryBank::load(dir / "temporal.bank", run.config.store, seed + 1);
    return run;
}

} // namespace rast
