#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "rast/bench.hpp"
#include "rast/checkpoint.hpp"
#include "rast/errors.hpp"
#include "rast/trainer.hpp"

namespace py = pybind11;
using namespace rast;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Array& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

RunConfig config_from(const std::string& text) {
    if (text.empty()) return RunConfig{};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    auto cfg = run_config_from_json(j);
    cfg.validate();
    return cfg;
}

IndexKind index_kind(const std::string& s) {
    if (s == "flat") return IndexKind::Flat;
    if (s == "ivf") return IndexKind::Ivf;
    throw ConfigError("unknown index kind '" + s + "' (expected flat or ivf)");
}

BankTag bank_tag(const std::string& s) {
    if (s == "spatial") return BankTag::Spatial;
    if (s == "temporal") return BankTag::Temporal;
    throw ConfigError("unknown bank tag '" + s + "' (expected spatial or temporal)");
}

py::list hits_to_list(const std::vector<SearchHit>& hits) {
    py::list out;
    for (const auto& h : hits) out.append(py::make_tuple(h.id, h.similarity));
    return out;
}

std::string train(const std::string& config, const std::string& source, const std::string& out_dir, bool log) {
    const auto cfg = config_from(config);
    const auto data = load_dataset(source, cfg);
    Trainer trainer(cfg, data);
    TrainOptions opts;
    opts.out_dir = out_dir;
    opts.data_source = is_synthetic_source(source) || source.empty()
                           ? source
                           : std::filesystem::absolute(source).string();
    if (log) {
        opts.log = [](const std::string& s) {
            py::gil_scoped_acquire gil;
            py::print(s);
        };
    }
    const auto r = trainer.fit(opts);
    nlohmann::json j{{"best_epoch", r.best_epoch},
                     {"epochs_run", r.epochs_run},
                     {"stopped_early", r.stopped_early},
                     {"best_val_mae", r.best_val_mae},
                     {"history", r.history_json()},
                     {"events", r.events_json()},
                     {"val", r.val.to_json()},
                     {"test", r.test.to_json()}};
    return j.dump();
}

std::string evaluate_checkpoint(const std::string& ckpt, const std::string& split, const std::string& data) {
    auto run = load_checkpoint(ckpt, data);
    const auto* store = run.config.model.output_type == OutputType::QueryOnly ? nullptr : run.store.get();
    return evaluate(*run.model, store, run.data, split_from_string(split), run.config.train.batch_size)
        .to_json()
        .dump();
}

std::string metrics(const Array& pred, const Array& target, double null_val) {
    if (pred.ndim() < 2) throw ShapeError("predictions need at least (samples, horizon) axes");
    if (pred.ndim() != target.ndim()) throw ShapeError("prediction and target ranks differ");
    for (py::ssize_t i = 0; i < pred.ndim(); ++i) {
        if (pred.shape(i) != target.shape(i)) throw ShapeError("prediction and target shapes differ");
    }
    std::size_t per_step = 1;
    for (py::ssize_t i = 2; i < pred.ndim(); ++i) per_step *= static_cast<std::size_t>(pred.shape(i));
    return compute_metrics(view(pred), view(target), static_cast<std::size_t>(pred.shape(0)),
                           static_cast<std::size_t>(pred.shape(1)), per_step, null_val)
        .to_json()
        .dump();
}

py::tuple synthetic(const std::string& spec) {
    const auto s = generate_synthetic(parse_synthetic_spec(spec));
    Array values({s.steps, s.nodes, s.channels});
    std::copy(s.values.begin(), s.values.end(), values.mutable_data());
    Array adj({s.nodes, s.nodes});
    std::copy(s.graph.adjacency().begin(), s.graph.adjacency().end(), adj.mutable_data());
    return py::make_tuple(values, adj, s.channel_names);
}

} // namespace

PYBIND11_MODULE(_rast, m) {
    m.doc() = "Retrieval-augmented spatio-temporal forecasting core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

    m.def("default_config", [] { return to_json(RunConfig{}).dump(); });
    m.def("normalize_config", [](const std::string& text) { return to_json(config_from(text)).dump(); },
          py::arg("config"));
    m.def("load_config", [](const std::string& path) { return to_json(load_run_config(path)).dump(); },
          py::arg("path"));
    m.def("lr_at", [](std::size_t epoch, const std::string& config) { return lr_schedule(epoch, config_from(config).train); },
          py::arg("epoch"), py::arg("config") = "");
    m.def("horizon_at",
          [](std::size_t epoch, const std::string& config) {
              const auto cfg = config_from(config);
              return curriculum_horizon(epoch, cfg.train, cfg.model.output_len);
          },
          py::arg("epoch"), py::arg("config") = "");

    m.def("synthetic", &synthetic, py::arg("spec"));
    m.def("write_synthetic",
          [](const std::string& spec, const std::string& path) { write_stb(path, generate_synthetic(parse_synthetic_spec(spec))); },
          py::arg("spec"), py::arg("path"));

    m.def("train", &train, py::arg("config"), py::arg("data"), py::arg("out_dir") = "", py::arg("log") = false,
          py::call_guard<py::gil_scoped_release>());
    m.def("evaluate", &evaluate_checkpoint, py::arg("ckpt"), py::arg("split") = "test", py::arg("data") = "");
    m.def("compute_metrics", &metrics, py::arg("pred"), py::arg("target"), py::arg("null_val") = 0.0);

    m.def("entropy", [](const Array& v) { return entropy(view(v)); }, py::arg("values"));
    m.def("similarity", [](const Array& q, const Array& v) {
        if (q.size() != v.size()) throw ShapeError("similarity operands differ in length");
        return similarity(view(q), view(v));
    });

    py::class_<MemoryBank>(m, "MemoryBank")
        .def(py::init([](std::size_t dim, const std::string& tag, std::size_t capacity, const std::string& index,
                         std::uint64_t seed) {
                 StorePolicy p;
                 p.capacity = capacity;
                 p.index_kind = index_kind(index);
                 return MemoryBank(bank_tag(tag), dim, p, seed);
             }),
             py::arg("dim"), py::arg("tag") = "spatial", py::arg("capacity") = 1000, py::arg("index") = "ivf",
             py::arg("seed") = 0)
        .def_property_readonly("dim", &MemoryBank::dim)
        .def_property_readonly("tag", [](const MemoryBank& b) { return to_string(b.tag()); })
        .def("__len__", &MemoryBank::size)
        .def("insert", [](MemoryBank& b, const Array& v, std::uint32_t epoch) { return b.insert(view(v), epoch); },
             py::arg("vector"), py::arg("epoch") = 0)
        .def("update_bank",
             [](MemoryBank& b, const Array& rows, std::uint32_t epoch) {
                 if (rows.ndim() != 2 || static_cast<std::size_t>(rows.shape(1)) != b.dim())
                     throw ShapeError("update_bank expects rows of shape (n, dim)");
                 const auto r = b.update_bank(view(rows), epoch);
                 return py::dict(py::arg("inserted") = r.inserted, py::arg("blended") = r.blended,
                                 py::arg("evicted") = r.evicted);
             },
             py::arg("rows"), py::arg("epoch"))
        .def("build_index",
             [](MemoryBank& b, const std::string& kind, std::size_t n_list) {
                 const auto o = b.build_index(index_kind(kind), n_list);
                 return py::dict(py::arg("kind") = to_string(o.kind), py::arg("downgraded") = o.downgraded,
                                 py::arg("n_list") = b.index().n_list, py::arg("n_probe") = b.index().n_probe);
             },
             py::arg("kind") = "ivf", py::arg("n_list") = 0)
        .def("search",
             [](const MemoryBank& b, const Array& q, std::size_t k, std::size_t n_probe) {
                 return hits_to_list(b.search(view(q), k, n_probe));
             },
             py::arg("query"), py::arg("k"), py::arg("n_probe") = 0)
        .def("search_exact", [](const MemoryBank& b, const Array& q, std::size_t k) { return hits_to_list(b.search_exact(view(q), k)); },
             py::arg("query"), py::arg("k"))
        .def("record_retrieval",
             [](MemoryBank& b, const Array& q, std::size_t k) { return b.update_momentum(b.search(view(q), k)); },
             py::arg("query"), py::arg("k"))
        .def("prune_and_decay",
             [](MemoryBank& b, std::uint32_t epoch) {
                 py::list out;
                 for (const auto& e : b.prune_and_decay(epoch).evicted) out.append(py::make_tuple(e.id, e.reason));
                 return out;
             },
             py::arg("epoch"))
        .def("vector",
             [](const MemoryBank& b, std::uint32_t id) {
                 const auto v = b.vector(id);
                 Array out(static_cast<py::ssize_t>(v.size()));
                 std::copy(v.begin(), v.end(), out.mutable_data());
                 return out;
             })
        .def("entry",
             [](const MemoryBank& b, std::uint32_t id) {
                 const auto e = b.entry(id);
                 return py::dict(py::arg("momentum") = e.momentum, py::arg("epoch_stamp") = e.epoch_stamp,
                                 py::arg("insert_count") = e.insert_count, py::arg("mean") = e.mean,
                                 py::arg("variance") = e.variance);
             })
        .def("save", [](const MemoryBank& b, const std::string& path) { b.save(path); })
        .def_static("load", [](const std::string& path) { return MemoryBank::load(path); })
        .def("same_content", &MemoryBank::same_content);

    m.def("bench_store",
          [](std::vector<std::size_t> sizes, std::size_t dim, std::size_t queries, std::size_t repeats,
             std::uint64_t seed) {
              BenchOptions o;
              o.sizes = std::move(sizes);
              o.dim = dim;
              o.queries = queries;
              o.repeats = repeats;
              o.seed = seed;
              py::list out;
              for (const auto& r : bench_store(o)) {
                  out.append(py::dict(py::arg("size") = r.size, py::arg("n_list") = r.n_list,
                                      py::arg("n_probe") = r.n_probe, py::arg("flat_us") = r.flat_us,
                                      py::arg("ivf_us") = r.ivf_us, py::arg("ratio") = r.ratio,
                                      py::arg("recall") = r.recall));
              }
              return out;
          },
          py::arg("sizes") = std::vector<std::size_t>{1000, 8000}, py::arg("dim") = 32, py::arg("queries") = 500,
          py::arg("repeats") = 7, py::arg("seed") = 42);
}
