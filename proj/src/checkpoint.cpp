#include "faithscan/checkpoint.hpp"

#include <cmath>

#include <fmt/format.h>

#include "faithscan/error.hpp"
#include "faithscan/framing.hpp"
#include "faithscan/io_util.hpp"

namespace faithscan {

using nlohmann::json;

json to_json(const ModelSpec& spec) {
  json branches = json::array();
  for (const auto& b : spec.branches) {
    branches.push_back({{"source", to_string(b.source)},
                        {"encoder_kind", to_string(b.encoder_kind)},
                        {"in_dim", b.in_dim},
                        {"out_dim", b.out_dim}});
  }
  return {{"branches", branches},
          {"fusion",
           {{"gated", spec.fusion.gated},
            {"score_activation", to_string(spec.fusion.score_activation)},
            {"attn_dim", spec.fusion.attn_dim},
            {"gate_activation", to_string(spec.fusion.gate_activation)}}}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  try {
    for (const auto& b : j.at("branches")) {
      spec.branches.push_back({source_from_string(b.at("source").get<std::string>()),
                               encoder_kind_from_string(b.at("encoder_kind").get<std::string>()),
                               b.at("in_dim").get<std::size_t>(), b.at("out_dim").get<std::size_t>()});
    }
    const auto& f = j.at("fusion");
    spec.fusion.gated = f.at("gated").get<bool>();
    spec.fusion.score_activation = activation_from_string(f.at("score_activation").get<std::string>());
    spec.fusion.attn_dim = f.at("attn_dim").get<std::size_t>();
    spec.fusion.gate_activation = activation_from_string(f.at("gate_activation").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::malformed_header, fmt::format("bad model spec: {}", e.what()));
  }
  validate_model_spec(spec);
  return spec;
}

std::string encode_checkpoint(const Detector& detector) {
  json tensors = json::array();
  for (const auto& t : detector.params().tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  const auto& values = detector.params().values();
  std::vector<float> payload(values.begin(), values.end());
  json header{{"format", "faithscan-detector"},
              {"model", to_json(detector.spec())},
              {"tensors", tensors},
              {"payload_floats", payload.size()}};
  return frame(kCheckpointMagic, kCheckpointVersion, header, payload);
}

Detector decode_checkpoint(std::string_view bytes) {
  Framed framed = unframe(bytes, kCheckpointMagic, kCheckpointVersion);
  if (!framed.header.contains("model") || !framed.header.contains("tensors")) {
    fail(ErrorKind::malformed_header, "checkpoint header lacks 'model' or 'tensors'");
  }
  Detector detector(model_spec_from_json(framed.header["model"]));
  const auto& expected = detector.params().tensors();
  const auto& listed = framed.header["tensors"];
  if (!listed.is_array() || listed.size() != expected.size()) {
    fail(ErrorKind::shape_mismatch, "checkpoint tensor table does not match the model spec");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    try {
      if (listed[i].at("name").get<std::string>() != expected[i].name ||
          listed[i].at("shape").get<std::vector<std::size_t>>() != expected[i].shape ||
          listed[i].at("offset").get<std::size_t>() != expected[i].offset) {
        fail(ErrorKind::shape_mismatch,
             fmt::format("checkpoint tensor {} does not match parameter '{}'", i, expected[i].name));
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::malformed_header, fmt::format("bad tensor entry {}: {}", i, e.what()));
    }
  }
  if (framed.payload.size() != detector.params().size()) {
    fail(ErrorKind::length_mismatch, "checkpoint payload size does not match the tensor table");
  }
  auto& values = detector.params().values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(framed.payload[i]);
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::non_finite,
           fmt::format("checkpoint parameter '{}' is not finite", detector.params().owner_of(i)));
    }
  }
  return detector;
}

void save_checkpoint(const Detector& detector, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(detector));
}

Detector load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace faithscan
