#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "faithscan/checkpoint.hpp"
#include "faithscan/framing.hpp"
#include "fixtures.hpp"

using namespace faithscan;
using fstest::error_kind;

TEST(Checkpoint, RoundTripStoresFloat32Parameters) {
  std::mt19937_64 rng(1);
  const Schema s = fstest::tiny_schema();
  for (std::size_t variant = 0; variant < 8; ++variant) {
    const ModelSpec spec = fstest::random_tiny_spec(s, rng, variant);
    const Detector det = fstest::jittered_detector(spec, variant);
    const std::string bytes = encode_checkpoint(det);
    const Detector back = decode_checkpoint(bytes);
    EXPECT_EQ(back.spec(), spec);
    ASSERT_EQ(back.params().size(), det.params().size());
    for (std::size_t i = 0; i < det.params().size(); ++i) {
      EXPECT_EQ(back.params().values()[i],
                static_cast<double>(static_cast<float>(det.params().values()[i])));
    }
    // A reloaded checkpoint re-encodes to the same bytes.
    EXPECT_EQ(encode_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, TensorTableMismatchRejected) {
  const ModelSpec spec = default_model_spec(fstest::tiny_schema(), 4);
  const std::string bytes = encode_checkpoint(Detector::initialized(spec, 0));
  Framed f = unframe(bytes, kCheckpointMagic, kCheckpointVersion);
  f.header["tensors"][0]["shape"] = {99, 1};
  const std::string broken = frame(kCheckpointMagic, kCheckpointVersion, f.header, f.payload);
  EXPECT_EQ(error_kind([&] { decode_checkpoint(broken); }), ErrorKind::shape_mismatch);
}

TEST(Checkpoint, ContainerMagicRejected) {
  EXPECT_EQ(error_kind([&] { decode_checkpoint("FSCN\x01\x00\x02\x00\x00\x00{}"); }),
            ErrorKind::bad_magic);
}

TEST(Checkpoint, ModelSpecJsonRoundTrip) {
  ModelSpec spec = default_model_spec(fstest::tiny_schema(), 7, EncoderKind::conv_pool);
  spec.fusion.gated = false;
  spec.fusion.gate_activation = Activation::sigmoid;
  spec.fusion.score_activation = Activation::tanh;
  EXPECT_EQ(model_spec_from_json(to_json(spec)), spec);
}
