#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace faithscan {

// Shared framing for every binary artifact (feature container, detector
// checkpoint, baseline pipeline):
//   4-byte magic | u16 LE version | u32 LE header length | JSON header | f32 LE payload
// The header must carry "payload_floats", the number of floats that follow.
struct Framed {
  std::uint16_t version = 0;
  nlohmann::json header;
  std::vector<float> payload;
};

std::string frame(std::string_view magic, std::uint16_t version, const nlohmann::json& header,
                  std::span<const float> payload);

Framed unframe(std::string_view bytes, std::string_view magic, std::uint16_t version);

void append_f32_le(std::string& out, float value);
float read_f32_le(const char* bytes);

}  // namespace faithscan
