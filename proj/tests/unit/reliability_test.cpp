#include <cmath>

#include <gtest/gtest.h>

#include "faithscan/reliability.hpp"
#include "fixtures.hpp"

using namespace faithscan;
using fstest::error_kind;

TEST(SNli, SpecExamples) {
  EXPECT_EQ(s_nli({1.0 / 3, 1.0 / 3, 1.0 / 3}), 0.0);
  EXPECT_EQ(s_nli({1.0, 0.0, 0.0}), 1.0);
  EXPECT_NEAR(s_nli({0.5, 0.5, 0.0}), 1.0 - std::log(2.0) / std::log(3.0), 1e-15);
  EXPECT_EQ(error_kind([] { s_nli({0.5, 0.2, 0.1}); }), ErrorKind::simplex_violation);
}

TEST(SNli, PermutationInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng) * (1 - a);
    const Simplex3 p{a, b, 1 - a - b};
    const double v = s_nli(p);
    EXPECT_NEAR(s_nli({p[2], p[0], p[1]}), v, 1e-15);
    EXPECT_NEAR(s_nli({p[1], p[2], p[0]}), v, 1e-15);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SStoch, SpecExamplesAndShiftInvariance) {
  EXPECT_EQ(s_stoch(std::vector<double>{0.4, 0.4, 0.4}), 1.0);
  EXPECT_NEAR(s_stoch(std::vector<double>{0.0, 1.0}), std::exp(-0.25), 1e-15);
  EXPECT_EQ(s_stoch(std::vector<double>{0.7}), 1.0);
  EXPECT_EQ(error_kind([] { s_stoch(std::vector<double>{}); }), ErrorKind::invalid_argument);
  const std::vector<double> h{0.1, 0.3, 0.25, 0.9};
  std::vector<double> shifted(h);
  for (double& v : shifted) v += 0.5;
  EXPECT_NEAR(s_stoch(h), s_stoch(shifted), 1e-14);
}

TEST(SRef, SpecExamplesAndSymmetry) {
  EXPECT_NEAR(s_ref(std::vector<double>{0.9, 0.9}, 1), 0.1, 1e-15);
  EXPECT_EQ(s_ref(std::vector<double>{1.0, 1.0}, 1), kMinSRef);
  EXPECT_NEAR(s_ref(std::vector<double>{0.8, 0.6}, 0), 0.7, 1e-15);
  EXPECT_EQ(error_kind([] { s_ref(std::vector<double>{1.2}, 0); }), ErrorKind::invalid_argument);
  const std::vector<double> r{0.3, 0.45, 0.2};
  std::vector<double> flipped;
  for (double v : r) flipped.push_back(1.0 - v);
  EXPECT_NEAR(s_ref(r, 1), s_ref(flipped, 0), 1e-15);
}

TEST(CombineRawWeight, SpecExamples) {
  EXPECT_EQ(combine_raw_weight({0.1, 0.2, 0.7}, {0, 0, 1}), 0.7);
  EXPECT_EQ(combine_raw_weight({0.0, 0.2, 0.7}, {1, 0, 0}), 0.0);
  EXPECT_NEAR(combine_raw_weight({0.4, 0.8, 0.1}, {0.5, 0.5, 0}), 0.6, 1e-15);
  EXPECT_THROW(validate_weight_combination({-1, 0, 1}), Error);
}

TEST(ClassNormalize, SpecExamples) {
  EXPECT_EQ(class_normalize(std::vector<double>{1, 1, 3}, std::vector<int>{0, 0, 1}),
            (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(class_normalize(std::vector<double>{1, 3, 5}, std::vector<int>{0, 0, 1}),
            (std::vector<double>{0.5, 1.5, 1}));
  EXPECT_EQ(class_normalize(std::vector<double>{1, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}),
            (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(error_kind([] { class_normalize(std::vector<double>{1, 2}, std::vector<int>{0, 0}); }),
            ErrorKind::single_class);
  EXPECT_EQ(error_kind([] { class_normalize(std::vector<double>{0, 2}, std::vector<int>{0, 1}); }),
            ErrorKind::invalid_argument);
}

TEST(ClassNormalize, UnitClassMeansIdempotentAndScaleFree) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 200;
    std::vector<double> w(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = u(rng);
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const auto out = class_normalize(w, y);
    double sum[2] = {0, 0}, cnt[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      sum[y[i]] += out[i];
      cnt[y[i]] += 1;
    }
    EXPECT_NEAR(sum[0] / cnt[0], 1.0, 1e-12);
    EXPECT_NEAR(sum[1] / cnt[1], 1.0, 1e-12);
    const auto again = class_normalize(out, y);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(again[i], out[i], 1e-12);
    std::vector<double> scaled(w);
    for (std::size_t i = 0; i < n; ++i) if (y[i] == 1) scaled[i] *= 7.5;
    const auto s = class_normalize(scaled, y);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(s[i], out[i], 1e-12);
  }
}

TEST(Reflection, ParsingAndFallback) {
  EXPECT_EQ(parse_reflection(R"({"support_score": 0.85, "reason": "matches"})"), 0.85);
  EXPECT_EQ(parse_reflection("Sure! ```{\"support_score\": 0.2}```"), 0.2);
  EXPECT_EQ(parse_reflection("no json"), 0.5);
  EXPECT_EQ(parse_reflection(R"({"support_score": 3})"), 0.5);
  const std::string prompt = reflection_prompt("What color?", "Red.");
  EXPECT_NE(prompt.find("What color?"), std::string::npos);
  EXPECT_NE(prompt.find("Red."), std::string::npos);
}

TEST(ApplyReliability, SetsSignalsAndNormalizedWeights) {
  std::mt19937_64 rng(3);
  Dataset ds = fstest::random_dataset(fstest::tiny_schema(), 4, rng);
  ds.records[0].judge_probs = Simplex3{0.9, 0.05, 0.05};
  ds.records[1].judge_probs = Simplex3{0.1, 0.6, 0.3};
  ds.records[2].judge_probs = Simplex3{0.5, 0.5, 0.0};
  ds.records[3].judge_probs = Simplex3{0.2, 0.2, 0.6};
  const std::string jsonl =
      "{\"id\":\"r0000\",\"stoch_hall_scores\":[0.1,0.1],\"reflection_scores\":[0.9,0.7]}\n"
      "{\"id\":\"r0001\",\"stoch_hall_scores\":[0.9,0.8],\"reflection_scores\":[0.2,0.4]}\n"
      "{\"id\":\"r0002\",\"stoch_hall_scores\":[0.3],\"reflection_scores\":[0.6]}\n"
      "{\"id\":\"r0003\",\"stoch_hall_scores\":[0.7,0.7],"
      "\"reflection_scores\":[\"{\\\"support_score\\\": 0.1}\"]}\n";
  const auto inputs = parse_reliability_jsonl(jsonl);
  ASSERT_EQ(inputs.size(), 4u);
  EXPECT_EQ(inputs.at("r0003").reflection_scores, std::vector<double>{0.1});
  const Dataset out = apply_reliability(ds, inputs, WeightCombination{});
  // Labels alternate 0,1,0,1; s_ref: 0.8, 0.7, 0.6, 0.9 -> class means 0.7 and 0.8.
  EXPECT_NEAR(out.records[0].reliability->s_ref, 0.8, 1e-15);
  EXPECT_NEAR(out.records[1].reliability->s_ref, 0.7, 1e-15);
  EXPECT_NEAR(*out.records[0].weight, 0.8 / 0.7, 1e-12);
  EXPECT_NEAR(*out.records[3].weight, 0.9 / 0.8, 1e-12);
  const std::string hist = reliability_histogram_csv(out, 4);
  EXPECT_EQ(hist.rfind("signal,bucket_lo,bucket_hi,label,count\n", 0), 0u);

  EXPECT_EQ(error_kind([&] { parse_reliability_jsonl(jsonl + jsonl); }), ErrorKind::invalid_argument);
  auto partial = inputs;
  partial.erase("r0002");
  EXPECT_EQ(error_kind([&] { apply_reliability(ds, partial, WeightCombination{}); }),
            ErrorKind::invalid_argument);
}
