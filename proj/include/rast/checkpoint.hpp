#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "rast/config.hpp"
#include "rast/data.hpp"
#include "rast/model.hpp"
#include "rast/store.hpp"

namespace rast {

/// params.bin: "RASTPARM", u32 version, u32 count, then per tensor a u16
/// name length, the name, a u8 rank, u64 extents and f64 values; CRC32 trailer.
void save_parameters(const std::filesystem::path& path, const ParameterList& params);
/// Copies values into `params` by name. Any missing name or shape mismatch
/// raises FormatError.
void load_parameters(const std::filesystem::path& path, ParameterList& params);

/// Seed for the spatial bank; the temporal bank uses seed + 1.
std::uint64_t store_seed(const RunConfig& cfg);

/// A checkpoint directory holds config.json, data.json, params.bin and the
/// two bank snapshots.
void save_checkpoint(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& data_source,
                     const DatasetBundle& data, const RastModel& model, const RetrievalStore& store);

struct LoadedRun {
    RunConfig config;
    std::string data_source;
    DatasetBundle data;
    std::unique_ptr<RastModel> model;
    std::unique_ptr<RetrievalStore> store;
};

/// Rebuilds model, banks and dataset. `data_source` overrides the recorded one.
LoadedRun load_checkpoint(const std::filesystem::path& dir, const std::string& data_source = {});

} // namespace rast
