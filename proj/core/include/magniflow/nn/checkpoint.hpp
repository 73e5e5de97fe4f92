#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "magniflow/nn/layers.hpp"

namespace magniflow::nn {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t master_seed = 0;
  std::string kind;         // "dmm" or "fvs"
  std::string config_json;  // model hyper-parameters, serialised JSON object
};

// Writes parameters, AdamW moments and the step counter. Layout: 8-byte
// magic, uint64 header length, JSON header, little-endian float32 blobs.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta);

// Reads the header only.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Fills an already-constructed ParameterSet. Names and shapes must match
// the registry exactly, otherwise CheckpointError.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParameterSet& params);

}  // namespace magniflow::nn
