#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "faithscan/detector.hpp"

namespace faithscan {

inline constexpr std::string_view kCheckpointMagic = "FSCK";
inline constexpr std::uint16_t kCheckpointVersion = 1;

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Header: model spec, tensor table (name, shape, offset) and payload size;
// payload: every parameter as f32 LE in tensor-table order.
std::string encode_checkpoint(const Detector& detector);
Detector decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Detector& detector, const std::filesystem::path& path);
Detector load_checkpoint(const std::filesystem::path& path);

}  // namespace faithscan
