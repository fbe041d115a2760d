#include <bit>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "faithscan/container.hpp"
#include "faithscan/framing.hpp"
#include "faithscan/io_util.hpp"
#include "fixtures.hpp"

using namespace faithscan;
using fstest::error_kind;
using nlohmann::json;

namespace {

Dataset sample_dataset(std::uint64_t seed, std::size_t n = 6) {
  std::mt19937_64 rng(seed);
  Dataset ds = fstest::random_dataset(fstest::tiny_schema(), n, rng);
  ds.split = Split::test;
  ds.records[0].judge_probs = Simplex3{0.2, 0.5, 0.3};
  ds.records[0].reliability = ReliabilitySignals{0.1, 0.9, 0.05};
  ds.records[0].weight = 1.25;
  ds.records[0].answer_text = "A red bus.";
  ds.records[0].meta["image"] = "images/0001.jpg";
  ds.records[1].label.reset();
  return ds;
}

// Header length field sits right after the magic and version.
std::uint32_t header_len(const std::string& bytes) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[6 + i]);
  return v;
}

std::string with_header(const std::string& bytes, const json& header) {
  const std::uint32_t old_len = header_len(bytes);
  const std::string payload = bytes.substr(10 + old_len);
  std::string text = header.dump();
  std::string out = bytes.substr(0, 6);
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((text.size() >> shift) & 0xff));
  }
  return out + text + payload;
}

json header_of(const std::string& bytes) {
  return json::parse(bytes.substr(10, header_len(bytes)));
}

}  // namespace

TEST(Container, RoundTripIsBitExact) {
  const Dataset ds = sample_dataset(1);
  const std::string bytes = encode_container(ds);
  const Dataset back = decode_container(bytes);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(encode_container(back), bytes);
}

TEST(Container, RoundTripPreservesAwkwardFloats) {
  Dataset ds = sample_dataset(2, 2);
  ds.records[0].token_ll[0] = -0.0f;
  ds.records[0].token_ent[0] = std::numeric_limits<float>::denorm_min();
  ds.records[0].token_emb.at(0, 0) = std::numeric_limits<float>::max();
  ds.records[0].token_emb.at(0, 1) = -std::numeric_limits<float>::min();
  const Dataset back = decode_container(encode_container(ds));
  for (std::size_t i = 0; i < ds.records[0].token_emb.data.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.records[0].token_emb.data[i]),
              std::bit_cast<std::uint32_t>(ds.records[0].token_emb.data[i]));
  }
  EXPECT_EQ(std::bit_cast<std::uint32_t>(back.records[0].token_ll[0]), 0x80000000u);
}

TEST(Container, EncodingIsDeterministic) {
  EXPECT_EQ(encode_container(sample_dataset(3)), encode_container(sample_dataset(3)));
}

TEST(Container, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "faithscan_container_test.fscn";
  const Dataset ds = sample_dataset(4);
  write_container(ds, path);
  EXPECT_EQ(read_container(path), ds);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
}

TEST(Container, BadMagic) {
  std::string bytes = encode_container(sample_dataset(5));
  bytes[0] = 'X';
  EXPECT_EQ(error_kind([&] { decode_container(bytes); }), ErrorKind::bad_magic);
  EXPECT_EQ(error_kind([&] { decode_container("FS"); }), ErrorKind::bad_magic);
}

TEST(Container, UnsupportedVersion) {
  std::string bytes = encode_container(sample_dataset(5));
  bytes[4] = 2;
  EXPECT_EQ(error_kind([&] { decode_container(bytes); }), ErrorKind::unsupported_version);
}

TEST(Container, TruncatedPayload) {
  const std::string bytes = encode_container(sample_dataset(6));
  EXPECT_EQ(error_kind([&] { decode_container(bytes.substr(0, bytes.size() - 4)); }),
            ErrorKind::truncated_payload);
  EXPECT_EQ(error_kind([&] { decode_container(bytes.substr(0, bytes.size() - 1)); }),
            ErrorKind::truncated_payload);
  EXPECT_EQ(error_kind([&] { decode_container(bytes.substr(0, 7)); }), ErrorKind::truncated_payload);
}

TEST(Container, TrailingBytesAreLengthMismatch) {
  const std::string bytes = encode_container(sample_dataset(7));
  EXPECT_EQ(error_kind([&] { decode_container(bytes + std::string(4, '\0')); }),
            ErrorKind::length_mismatch);
}

TEST(Container, HeaderLengthBeyondFileIsLengthMismatch) {
  std::string bytes = encode_container(sample_dataset(7));
  bytes[9] = static_cast<char>(0x7f);
  EXPECT_EQ(error_kind([&] { decode_container(bytes); }), ErrorKind::length_mismatch);
}

TEST(Container, RecordCountDisagreement) {
  const std::string bytes = encode_container(sample_dataset(8));
  json h = header_of(bytes);
  h["record_count"] = h["record_count"].get<int>() + 1;
  EXPECT_EQ(error_kind([&] { decode_container(with_header(bytes, h)); }), ErrorKind::length_mismatch);
}

TEST(Container, UnclaimedPayloadIsLengthMismatch) {
  const std::string bytes = encode_container(sample_dataset(8));
  json h = header_of(bytes);
  h["payload_floats"] = h["payload_floats"].get<std::size_t>() + 2;
  h["record_count"] = h["records"].size() - 1;
  h["records"].erase(h["records"].size() - 1);
  // Records now cover fewer floats than the payload holds.
  std::string padded = with_header(bytes, h) + std::string(8, '\0');
  EXPECT_EQ(error_kind([&] { decode_container(padded); }), ErrorKind::length_mismatch);
}

TEST(Container, MalformedHeaderJson) {
  const std::string bytes = encode_container(sample_dataset(9));
  std::string broken = bytes;
  broken[10] = '[';
  broken[11] = ']';
  EXPECT_EQ(error_kind([&] { decode_container(broken); }), ErrorKind::malformed_header);
  broken = bytes;
  broken[10] = '#';
  EXPECT_EQ(error_kind([&] { decode_container(broken); }), ErrorKind::malformed_header);
}

TEST(Container, MissingFieldIsMalformedHeader) {
  const std::string bytes = encode_container(sample_dataset(10));
  json h = header_of(bytes);
  h.erase("schema");
  EXPECT_EQ(error_kind([&] { decode_container(with_header(bytes, h)); }), ErrorKind::malformed_header);
  h = header_of(bytes);
  h["records"][0]["tensors"].erase("mm_align");
  EXPECT_EQ(error_kind([&] { decode_container(with_header(bytes, h)); }), ErrorKind::malformed_header);
}

TEST(Container, OutOfOrderOffsetIsMalformedHeader) {
  const std::string bytes = encode_container(sample_dataset(11));
  json h = header_of(bytes);
  h["records"][0]["tensors"]["token_ent"]["offset"] = 0;
  EXPECT_EQ(error_kind([&] { decode_container(with_header(bytes, h)); }), ErrorKind::malformed_header);
}

TEST(Container, TensorPastEndIsTruncated) {
  const std::string bytes = encode_container(sample_dataset(12, 1));
  json h = header_of(bytes);
  auto& align = h["records"][0]["tensors"]["mm_align"];
  align["shape"][0] = align["shape"][0].get<std::size_t>() + 3;
  EXPECT_EQ(error_kind([&] { decode_container(with_header(bytes, h)); }), ErrorKind::truncated_payload);
}

TEST(Container, InvalidRecordContentRejectedOnRead) {
  const std::string bytes = encode_container(sample_dataset(13));
  json h = header_of(bytes);
  h["records"][0]["label"] = 3;
  EXPECT_EQ(error_kind([&] { decode_container(with_header(bytes, h)); }), ErrorKind::invalid_argument);
}

// A container assembled by hand, the way an external writer following the
// documented layout would produce it.
TEST(Container, ReadsHandAssembledContainer) {
  json header = {
      {"format", "faithscan-features"},
      {"split", "train"},
      {"schema",
       {{"d_h", 2}, {"d_v", 1}, {"d_align", 1}, {"max_tokens", 2}, {"max_patches", 1}, {"max_aligned", 1}}},
      {"record_count", 1},
      {"payload_floats", 9},
      {"records",
       json::array({{{"id", "ext-1"},
                     {"lengths", {1, 1, 0}},
                     {"label", 1},
                     {"judge_probs", {0.25, 0.5, 0.25}},
                     {"meta", {{"answer_tokens", "[\"Yes\"]"}}},
                     {"tensors",
                      {{"token_ll", {{"offset", 0}, {"shape", {2}}}},
                       {"token_ent", {{"offset", 2}, {"shape", {2}}}},
                       {"token_emb", {{"offset", 4}, {"shape", {2, 2}}}},
                       {"mm_patch", {{"offset", 8}, {"shape", {1, 1}}}},
                       {"mm_align", {{"offset", 9}, {"shape", {0, 1}}}}}}}})}};
  const float payload[9] = {-0.5f, 0.0f, 1.5f, 0.0f, 0.25f, -0.75f, 0.0f, 0.0f, 3.0f};
  std::string bytes = "FSCN";
  bytes.push_back(1);
  bytes.push_back(0);
  const std::string text = header.dump();
  for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<char>((text.size() >> shift) & 0xff));
  bytes += text;
  for (float f : payload) append_f32_le(bytes, f);

  const Dataset ds = decode_container(bytes);
  ASSERT_EQ(ds.records.size(), 1u);
  const FeatureRecord& r = ds.records[0];
  EXPECT_EQ(r.id, "ext-1");
  EXPECT_EQ(r.lengths.tokens, 1u);
  EXPECT_EQ(r.token_ll[0], -0.5f);
  EXPECT_EQ(r.token_ent[0], 1.5f);
  EXPECT_EQ(r.token_emb.at(0, 1), -0.75f);
  EXPECT_EQ(r.mm_patch.at(0, 0), 3.0f);
  EXPECT_EQ(r.mm_align.rows, 0u);
  EXPECT_EQ(*r.label, 1);
  EXPECT_EQ(r.meta.at("answer_tokens"), "[\"Yes\"]");
}

TEST(Container, SidecarHasOneLinePerRecord) {
  const Dataset ds = sample_dataset(14, 5);
  const std::string side = encode_sidecar(ds);
  EXPECT_EQ(std::count(side.begin(), side.end(), '\n'), 5);
  const json first = json::parse(side.substr(0, side.find('\n')));
  EXPECT_EQ(first["id"], ds.records[0].id);
  EXPECT_FALSE(first.contains("tensors"));
}
