#pragma once

#include "catnet/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace catnet {

/// Binary layout, little endian (see docs/checkpoint-format.md):
///   8 bytes   magic "CATCKPT1"
///   uint32    format version
///   uint64    metadata length L
///   L bytes   UTF-8 JSON: {"config": ..., "tensors": [{"name","group","rows","cols"}...], "extra": ...}
///   tensors   float32 row-major, in metadata order
inline constexpr char kCheckpointMagic[9] = "CATCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const nlohmann::json& extra = nlohmann::json::object());
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  Model model;
  nlohmann::json extra;
};

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// float32 bytes of every tensor in `group`, in registration order.
std::vector<std::uint8_t> group_bytes(const ParamStore& store, ParamGroup group);

}  // namespace catnet
