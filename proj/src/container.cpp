#include "faithscan/container.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "faithscan/error.hpp"
#include "faithscan/framing.hpp"
#include "faithscan/io_util.hpp"

namespace faithscan {

using nlohmann::json;

namespace {

json schema_to_json(const Schema& s) {
  return {{"d_h", s.d_h},
          {"d_v", s.d_v},
          {"d_align", s.d_align},
          {"max_tokens", s.max_lengths.tokens},
          {"max_patches", s.max_lengths.patches},
          {"max_aligned", s.max_lengths.aligned}};
}

template <typename T>
T get_field(const json& j, const char* key, std::string_view where) {
  if (!j.is_object() || !j.contains(key)) {
    fail(ErrorKind::malformed_header, fmt::format("{}: missing field '{}'", where, key));
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::malformed_header, fmt::format("{}: bad field '{}': {}", where, key, e.what()));
  }
}

Schema schema_from_json(const json& j) {
  Schema s;
  s.d_h = get_field<std::size_t>(j, "d_h", "schema");
  s.d_v = get_field<std::size_t>(j, "d_v", "schema");
  s.d_align = get_field<std::size_t>(j, "d_align", "schema");
  s.max_lengths.tokens = get_field<std::size_t>(j, "max_tokens", "schema");
  s.max_lengths.patches = get_field<std::size_t>(j, "max_patches", "schema");
  s.max_lengths.aligned = get_field<std::size_t>(j, "max_aligned", "schema");
  return s;
}

// Scalar and optional fields shared by the container header and the sidecar.
json record_metadata(const FeatureRecord& r) {
  json j;
  j["id"] = r.id;
  j["lengths"] = {r.lengths.tokens, r.lengths.patches, r.lengths.aligned};
  if (r.label) j["label"] = *r.label;
  if (r.judge_probs) j["judge_probs"] = *r.judge_probs;
  if (r.reliability) {
    j["reliability"] = {r.reliability->s_nli, r.reliability->s_stoch, r.reliability->s_ref};
  }
  if (r.weight) j["weight"] = *r.weight;
  if (r.answer_text) j["answer_text"] = *r.answer_text;
  j["meta"] = r.meta;
  return j;
}

struct TensorSlot {
  Source source;
  std::size_t rows;
  std::size_t cols;
};

std::vector<TensorSlot> slots_of(const FeatureRecord& r) {
  return {{Source::token_ll, r.token_ll.size(), 1},
          {Source::token_ent, r.token_ent.size(), 1},
          {Source::token_emb, r.token_emb.rows, r.token_emb.cols},
          {Source::mm_patch, r.mm_patch.rows, r.mm_patch.cols},
          {Source::mm_align, r.mm_align.rows, r.mm_align.cols}};
}

std::span<const float> tensor_data(const FeatureRecord& r, Source s) {
  switch (s) {
    case Source::token_ll: return r.token_ll;
    case Source::token_ent: return r.token_ent;
    case Source::token_emb: return r.token_emb.data;
    case Source::mm_patch: return r.mm_patch.data;
    case Source::mm_align: return r.mm_align.data;
  }
  return {};
}

}  // namespace

std::string encode_container(const Dataset& dataset) {
  validate_dataset(dataset);
  json header;
  header["format"] = "faithscan-features";
  header["split"] = std::string(to_string(dataset.split));
  header["schema"] = schema_to_json(dataset.schema);
  header["record_count"] = dataset.records.size();

  std::vector<float> payload;
  json records = json::array();
  for (const auto& r : dataset.records) {
    json entry = record_metadata(r);
    json tensors = json::object();
    for (const auto& slot : slots_of(r)) {
      const auto data = tensor_data(r, slot.source);
      json t{{"offset", payload.size()}};
      if (slot.source == Source::token_ll || slot.source == Source::token_ent) {
        t["shape"] = {slot.rows};
      } else {
        t["shape"] = {slot.rows, slot.cols};
      }
      tensors[std::string(to_string(slot.source))] = t;
      payload.insert(payload.end(), data.begin(), data.end());
    }
    entry["tensors"] = std::move(tensors);
    records.push_back(std::move(entry));
  }
  header["records"] = std::move(records);
  header["payload_floats"] = payload.size();
  return frame(kContainerMagic, kContainerVersion, header, payload);
}

Dataset decode_container(std::string_view bytes) {
  Framed framed = unframe(bytes, kContainerMagic, kContainerVersion);
  const json& header = framed.header;

  Dataset dataset;
  dataset.schema = schema_from_json(get_field<json>(header, "schema", "header"));
  try {
    dataset.split = split_from_string(get_field<std::string>(header, "split", "header"));
  } catch (const Error& e) {
    fail(ErrorKind::malformed_header, e.what());
  }
  const auto record_count = get_field<std::size_t>(header, "record_count", "header");
  const json records = get_field<json>(header, "records", "header");
  if (!records.is_array()) fail(ErrorKind::malformed_header, "'records' must be an array");
  if (records.size() != record_count) {
    fail(ErrorKind::length_mismatch,
         fmt::format("header declares {} records but lists {}", record_count, records.size()));
  }

  const std::vector<float>& payload = framed.payload;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& entry = records[i];
    const std::string where = fmt::format("record {}", i);
    FeatureRecord r;
    r.id = get_field<std::string>(entry, "id", where);
    const auto lengths = get_field<std::vector<std::size_t>>(entry, "lengths", where);
    if (lengths.size() != 3) fail(ErrorKind::malformed_header, where + ": lengths must have 3 entries");
    r.lengths = {lengths[0], lengths[1], lengths[2]};
    if (entry.contains("label")) r.label = get_field<int>(entry, "label", where);
    if (entry.contains("judge_probs")) r.judge_probs = get_field<Simplex3>(entry, "judge_probs", where);
    if (entry.contains("reliability")) {
      const auto rel = get_field<std::array<double, 3>>(entry, "reliability", where);
      r.reliability = ReliabilitySignals{rel[0], rel[1], rel[2]};
    }
    if (entry.contains("weight")) r.weight = get_field<double>(entry, "weight", where);
    if (entry.contains("answer_text")) r.answer_text = get_field<std::string>(entry, "answer_text", where);
    if (entry.contains("meta")) {
      r.meta = get_field<std::map<std::string, std::string>>(entry, "meta", where);
    }

    const json tensors = get_field<json>(entry, "tensors", where);
    for (Source s : kAllSources) {
      const json t = get_field<json>(tensors, std::string(to_string(s)).c_str(), where);
      const auto offset = get_field<std::size_t>(t, "offset", where);
      const auto shape = get_field<std::vector<std::size_t>>(t, "shape", where);
      const bool scalar = s == Source::token_ll || s == Source::token_ent;
      if (shape.size() != (scalar ? 1u : 2u)) {
        fail(ErrorKind::malformed_header, fmt::format("{}: bad shape rank for {}", where, to_string(s)));
      }
      const std::size_t rows = shape[0];
      const std::size_t cols = scalar ? 1 : shape[1];
      const std::size_t count = rows * cols;
      if (offset != cursor) {
        fail(ErrorKind::malformed_header,
             fmt::format("{}: {} offset {} breaks declared order (expected {})", where,
                         to_string(s), offset, cursor));
      }
      if (offset + count > payload.size()) {
        fail(ErrorKind::truncated_payload,
             fmt::format("{}: {} extends past the end of the payload", where, to_string(s)));
      }
      auto first = payload.begin() + static_cast<std::ptrdiff_t>(offset);
      auto last = first + static_cast<std::ptrdiff_t>(count);
      switch (s) {
        case Source::token_ll: r.token_ll.assign(first, last); break;
        case Source::token_ent: r.token_ent.assign(first, last); break;
        case Source::token_emb:
        case Source::mm_patch:
        case Source::mm_align: {
          Matrix m;
          m.rows = rows;
          m.cols = cols;
          m.data.assign(first, last);
          (s == Source::token_emb ? r.token_emb : s == Source::mm_patch ? r.mm_patch : r.mm_align) =
              std::move(m);
          break;
        }
      }
      cursor += count;
    }
    dataset.records.push_back(std::move(r));
  }
  if (cursor != payload.size()) {
    fail(ErrorKind::length_mismatch,
         fmt::format("records account for {} floats but payload holds {}", cursor, payload.size()));
  }
  validate_dataset(dataset);
  return dataset;
}

void write_container(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, encode_container(dataset));
}

Dataset read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

std::string encode_sidecar(const Dataset& dataset) {
  std::string out;
  for (const auto& r : dataset.records) {
    out += record_metadata(r).dump();
    out += '\n';
  }
  return out;
}

void write_sidecar(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, encode_sidecar(dataset));
}

}  // namespace faithscan
