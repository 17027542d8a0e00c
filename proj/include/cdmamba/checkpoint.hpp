#pragma once

#include <string>

#include "cdmamba/config.hpp"
#include "cdmamba/model.hpp"

namespace cdmamba {

/// Single-file checkpoint, little-endian:
///   "CDMB" | u32 version | u32 len + resolved config text |
///   u32 count | per parameter: u32 len + name, u32 rank, u32 dims, f32 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const CdMamba& model, const RunConfig& cfg);

struct LoadedCheckpoint {
    RunConfig config;
    CdMamba model;
};

/// Rebuilds the model from the embedded config and fills its weights.
LoadedCheckpoint load_checkpoint(const std::string& path);
/// Fills an existing model; shape disagreements name the parameter with
/// expected and found shapes.
void load_weights(const std::string& path, CdMamba& model);

}  // namespace cdmamba
