#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "faithscan/featureset.hpp"

namespace faithscan {

// Binary interchange container:
//   "FSCN" | u16 LE version | u32 LE header length | UTF-8 JSON header | f32 LE payload
// The JSON header carries the schema, the record count, per-record tensor
// offsets (in floats, relative to the payload start) and shapes, and all
// scalar/optional per-record fields. Tensors are stored per record in the
// order token_ll, token_ent, token_emb, mm_patch, mm_align.
inline constexpr std::string_view kContainerMagic = "FSCN";
inline constexpr std::uint16_t kContainerVersion = 1;

std::string encode_container(const Dataset& dataset);
Dataset decode_container(std::string_view bytes);

void write_container(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_container(const std::filesystem::path& path);

// One JSON object per line with each record's metadata; tensors omitted.
std::string encode_sidecar(const Dataset& dataset);
void write_sidecar(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace faithscan
