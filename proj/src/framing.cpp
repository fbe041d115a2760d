#include "faithscan/framing.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "faithscan/error.hpp"

namespace faithscan {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

void append_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::uint32_t load_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

}  // namespace

void append_f32_le(std::string& out, float value) {
  append_u32_le(out, std::bit_cast<std::uint32_t>(value));
}

float read_f32_le(const char* bytes) { return std::bit_cast<float>(load_u32_le(bytes)); }

std::string frame(std::string_view magic, std::uint16_t version, const nlohmann::json& header,
                  std::span<const float> payload) {
  const std::string text = header.dump();
  std::string out;
  out.reserve(magic.size() + 6 + text.size() + payload.size() * 4);
  out.append(magic);
  append_u16_le(out, version);
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.append(text);
  for (float v : payload) append_f32_le(out, v);
  return out;
}

Framed unframe(std::string_view bytes, std::string_view magic, std::uint16_t version) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic) {
    fail(ErrorKind::bad_magic, fmt::format("bad magic: expected '{}'", magic));
  }
  std::size_t pos = magic.size();
  if (bytes.size() < pos + 6) fail(ErrorKind::truncated_payload, "file ends inside the preamble");

  Framed out;
  out.version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[pos]) |
                                           (static_cast<unsigned char>(bytes[pos + 1]) << 8));
  pos += 2;
  if (out.version != version) {
    fail(ErrorKind::unsupported_version,
         fmt::format("unsupported version {} (supported: {})", out.version, version));
  }
  const std::uint32_t header_len = load_u32_le(bytes.data() + pos);
  pos += 4;
  if (header_len > bytes.size() - pos) {
    fail(ErrorKind::length_mismatch,
         fmt::format("header length {} exceeds the {} bytes remaining", header_len,
                     bytes.size() - pos));
  }
  try {
    out.header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, fmt::format("header is not valid JSON: {}", e.what()));
  }
  pos += header_len;
  if (!out.header.is_object() || !out.header.contains("payload_floats") ||
      !out.header["payload_floats"].is_number_unsigned()) {
    fail(ErrorKind::malformed_header, "header lacks an unsigned 'payload_floats' field");
  }
  const auto declared = out.header["payload_floats"].get<std::uint64_t>();
  const std::size_t available = bytes.size() - pos;
  if (declared > available / 4) {
    fail(ErrorKind::truncated_payload,
         fmt::format("payload holds {} bytes, header declares {}", available, declared * 4));
  }
  if (available > declared * 4) {
    fail(ErrorKind::length_mismatch,
         fmt::format("payload holds {} bytes, header declares only {}", available, declared * 4));
  }
  out.payload.resize(declared);
  for (std::size_t i = 0; i < declared; ++i) out.payload[i] = read_f32_le(bytes.data() + pos + 4 * i);
  return out;
}

}  // namespace faithscan
