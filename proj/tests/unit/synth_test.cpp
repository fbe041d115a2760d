#include <cmath>

#include <gtest/gtest.h>

#include "faithscan/container.hpp"
#include "faithscan/synth.hpp"
#include "fixtures.hpp"

using namespace faithscan;
using fstest::error_kind;

TEST(Synth, SameSeedGivesByteIdenticalContainer) {
  SynthSpec spec;
  spec.n_records = 40;
  EXPECT_EQ(encode_container(synth_generate(spec, 5)), encode_container(synth_generate(spec, 5)));
  EXPECT_NE(encode_container(synth_generate(spec, 5)), encode_container(synth_generate(spec, 6)));
}

TEST(Synth, RecordsValidateAndRespectSpec) {
  SynthSpec spec;
  spec.n_records = 101;
  spec.positive_fraction = 0.3;
  const Dataset ds = synth_generate(spec, 1);
  EXPECT_NO_THROW(validate_dataset(ds));
  ASSERT_EQ(ds.records.size(), 101u);
  int positives = 0;
  for (const auto& r : ds.records) {
    positives += *r.label;
    EXPECT_GE(r.lengths.tokens, spec.min_tokens);
    EXPECT_LE(r.lengths.tokens, spec.max_tokens);
    EXPECT_EQ(r.token_emb.cols, spec.d_h);
    EXPECT_EQ(r.mm_patch.rows, spec.n_patches);
  }
  EXPECT_EQ(positives, 30);
}

namespace {

// Difference of the per-token class-mean embeddings.
std::vector<double> class_mean_shift(const SynthSpec& spec, const Dataset& ds) {
  std::vector<double> mean_pos(spec.d_h, 0.0), mean_neg(spec.d_h, 0.0);
  double n_pos = 0, n_neg = 0;
  for (const auto& r : ds.records) {
    auto& m = *r.label == 1 ? mean_pos : mean_neg;
    (*r.label == 1 ? n_pos : n_neg) += static_cast<double>(r.lengths.tokens);
    for (std::size_t t = 0; t < r.lengths.tokens; ++t) {
      for (std::size_t c = 0; c < spec.d_h; ++c) m[c] += r.token_emb.at(t, c);
    }
  }
  std::vector<double> shift(spec.d_h);
  for (std::size_t c = 0; c < spec.d_h; ++c) shift[c] = mean_pos[c] / n_pos - mean_neg[c] / n_neg;
  return shift;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Synth, MarginShiftsPositiveMeanEmbedding) {
  SynthSpec spec;
  spec.n_records = 400;
  spec.margin = 3.0;
  const auto shift = class_mean_shift(spec, synth_generate(spec, 2));
  EXPECT_NEAR(std::sqrt(dot(shift, shift)), 3.0, 0.2);
}

TEST(Synth, RecordSeedsShareTheTaskDirection) {
  SynthSpec spec;
  spec.n_records = 400;
  spec.margin = 3.0;
  const auto a = class_mean_shift(spec, synth_generate(spec, 2));
  const auto b = class_mean_shift(spec, synth_generate(spec, 3));
  EXPECT_GT(dot(a, b) / std::sqrt(dot(a, a) * dot(b, b)), 0.95);
}

TEST(Synth, ZeroMarginAllowedNegativeRejected) {
  SynthSpec spec;
  spec.n_records = 10;
  spec.margin = 0.0;
  EXPECT_NO_THROW(synth_generate(spec, 0));
  spec.margin = -1.0;
  EXPECT_EQ(error_kind([&] { synth_generate(spec, 0); }), ErrorKind::invalid_argument);
  spec.margin = 1.0;
  spec.max_tokens = spec.max_lengths.tokens + 1;
  EXPECT_EQ(error_kind([&] { synth_generate(spec, 0); }), ErrorKind::invalid_argument);
}
