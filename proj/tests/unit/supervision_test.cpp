#include <algorithm>
#include <filesystem>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "faithscan/io_util.hpp"
#include "faithscan/judge_client.hpp"
#include "faithscan/prompts.hpp"
#include "faithscan/supervision.hpp"
#include "fixtures.hpp"

using namespace faithscan;
using fstest::error_kind;
using nlohmann::json;

namespace {

JudgeVerdict verdict(double e, double c, double u) {
  JudgeVerdict v;
  v.probs = {e, c, u};
  return v;
}

JudgeInstance instance(std::string id = "q1") {
  return {std::move(id), "https://example.org/cat.jpg", "What animal is shown?", "A cat.",
          "A dog sitting on a sofa."};
}

Simplex3 random_simplex(std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  Simplex3 s{ex(rng), ex(rng), ex(rng)};
  const double z = s[0] + s[1] + s[2];
  for (double& v : s) v /= z;
  return s;
}

}  // namespace

TEST(Aggregate, SpecExamples) {
  const std::vector<JudgeVerdict> two{verdict(0.8, 0.1, 0.1), verdict(0.6, 0.3, 0.1)};
  const auto a = aggregate_rounds(two);
  EXPECT_NEAR(a.mean_probs[0], 0.7, 1e-15);
  EXPECT_NEAR(a.p_hall, 0.3, 1e-15);
  EXPECT_EQ(a.y_hall, 0);
  EXPECT_EQ(a.rounds, 2u);

  const std::vector<JudgeVerdict> one{verdict(0.2, 0.5, 0.3)};
  EXPECT_EQ(aggregate_rounds(one).y_hall, 1);

  const std::vector<JudgeVerdict> tie{verdict(0.5, 0.25, 0.25)};
  EXPECT_EQ(aggregate_rounds(tie).p_hall, 0.5);
  EXPECT_EQ(aggregate_rounds(tie).y_hall, 0);

  EXPECT_EQ(error_kind([] { aggregate_rounds(std::vector<JudgeVerdict>{}); }),
            ErrorKind::invalid_argument);
}

TEST(Aggregate, PermutationInvariantSimplexAndMonotone) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<JudgeVerdict> vs;
    const std::size_t rounds = 1 + rng() % 5;
    for (std::size_t r = 0; r < rounds; ++r) {
      JudgeVerdict v;
      v.probs = random_simplex(rng);
      vs.push_back(v);
    }
    const auto base = aggregate_rounds(vs);
    EXPECT_NEAR(base.mean_probs[0] + base.mean_probs[1] + base.mean_probs[2], 1.0, 1e-12);
    EXPECT_EQ(base.y_hall, base.p_hall > base.mean_probs[0] ? 1 : 0);

    auto shuffled = vs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto perm = aggregate_rounds(shuffled);
    EXPECT_EQ(perm.y_hall, base.y_hall);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(perm.mean_probs[i], base.mean_probs[i], 1e-15);

    // Moving entailment mass to contradiction never flips 1 -> 0.
    auto moved = vs;
    const std::size_t k = rng() % rounds;
    const double delta = moved[k].probs[0] * 0.5;
    moved[k].probs[0] -= delta;
    moved[k].probs[1] += delta;
    if (base.y_hall == 1) EXPECT_EQ(aggregate_rounds(moved).y_hall, 1);
  }
}

TEST(ParseVerdict, ExactSimplex) {
  const auto v = parse_verdict(
      R"({"label":"entailment","prob":{"entailment":1.0,"contradiction":0.0,"uncertain":0.0}})");
  EXPECT_EQ(v.label, JudgeLabel::entailment);
  EXPECT_EQ(v.probs, (Simplex3{1.0, 0.0, 0.0}));
}

TEST(ParseVerdict, CodeFenceAndWhitespaceTolerated) {
  const auto v = parse_verdict(
      "\n```json\n{\"label\":\"contradiction\",\"prob\":{\"entailment\":0.1,"
      "\"contradiction\":0.8,\"uncertain\":0.1}}\n```\n");
  EXPECT_EQ(v.label, JudgeLabel::contradiction);
  EXPECT_DOUBLE_EQ(v.probs[1], 0.8);
}

TEST(ParseVerdict, SmallDeviationRenormalized) {
  const auto v = parse_verdict(
      R"({"label":"uncertain","prob":{"entailment":0.2,"contradiction":0.3,"uncertain":0.5005}})");
  EXPECT_NEAR(v.probs[0] + v.probs[1] + v.probs[2], 1.0, 1e-15);
  EXPECT_NEAR(v.probs[2], 0.5005 / 1.0005, 1e-15);
}

TEST(ParseVerdict, ErrorTaxonomy) {
  EXPECT_EQ(error_kind([] { parse_verdict("not json"); }), ErrorKind::malformed_json);
  EXPECT_EQ(error_kind([] { parse_verdict(R"({"label":"entailment"})"); }), ErrorKind::missing_key);
  EXPECT_EQ(error_kind([] {
              parse_verdict(R"({"label":"entailment","prob":{"entailment":1.0,"contradiction":0.0}})");
            }),
            ErrorKind::missing_key);
  EXPECT_EQ(error_kind([] {
              parse_verdict(
                  R"({"label":"entailment","prob":{"entailment":1.1,"contradiction":-0.1,"uncertain":0.0}})");
            }),
            ErrorKind::negative_probability);
  EXPECT_EQ(error_kind([] {
              parse_verdict(
                  R"({"label":"entailment","prob":{"entailment":0.5,"contradiction":0.2,"uncertain":0.1}})");
            }),
            ErrorKind::simplex_violation);
}

TEST(ParseVerdict, LabelMismatchIsOnlyAdvisory) {
  const auto v = parse_verdict(
      R"({"label":"entailment","prob":{"entailment":0.1,"contradiction":0.8,"uncertain":0.1}})");
  EXPECT_EQ(v.label, JudgeLabel::entailment);
  EXPECT_DOUBLE_EQ(v.probs[1], 0.8);
}

TEST(Template, FillsEachSlotOnceWithoutRescanning) {
  const std::vector<std::pair<std::string, std::string>> slots{{"a", "{b}"}, {"b", "x"}};
  EXPECT_EQ(fill_template("[{a}|{b}|{c]", slots), "[{b}|x|{c]");
  const std::vector<std::pair<std::string, std::string>> missing{{"zzz", "1"}};
  EXPECT_EQ(error_kind([&] { fill_template("no slots here", missing); }), ErrorKind::template_slot);
}

TEST(JudgeRequest, CarriesTemplateImageAndDecodingControls) {
  const json payload = judge_request(instance());
  const std::string prompt = request_prompt(payload);
  EXPECT_NE(prompt.find("### OUTPUT FORMAT"), std::string::npos);
  EXPECT_NE(prompt.find("What animal is shown?"), std::string::npos);
  EXPECT_NE(prompt.find("A dog sitting on a sofa."), std::string::npos);
  EXPECT_EQ(prompt.find("{question}"), std::string::npos);
  EXPECT_EQ(payload["temperature"], 0.1);
  EXPECT_EQ(payload["top_p"], 1.0);
  EXPECT_EQ(payload["model"], "Qwen2.5-VL-32B-Instruct");
  EXPECT_EQ(payload["messages"][0]["content"][0]["image_url"]["url"], "https://example.org/cat.jpg");
}

TEST(JudgeRequest, EmptyFieldsAndMissingSlotsRejected) {
  auto inst = instance();
  inst.question.clear();
  EXPECT_EQ(error_kind([&] { judge_request(inst); }), ErrorKind::invalid_argument);
  EXPECT_EQ(error_kind([] { judge_request(instance(), {}, std::string_view("no slots")); }),
            ErrorKind::template_slot);
}

TEST(Prompts, BundledAssetsMatchFiles) {
  const std::filesystem::path dir = FAITHSCAN_PROMPT_DIR;
  EXPECT_EQ(prompts::visual_nli_template(), read_file(dir / "visual_nli.txt"));
  EXPECT_EQ(prompts::reflection_template(), read_file(dir / "reflection.txt"));
  EXPECT_EQ(prompts::selfcheck_template(), read_file(dir / "selfcheck.txt"));
}

TEST(MockJudge, RoundTripParses) {
  MockJudgeClient client;
  for (std::size_t round = 0; round < 5; ++round) {
    const std::string reply = client.complete({"rec-7", round, judge_request(instance("rec-7"))});
    EXPECT_NO_THROW(parse_verdict(reply));
    EXPECT_EQ(reply, MockJudgeClient::synthesized_reply("rec-7", round));
  }
}

TEST(MockJudge, JudgeAllKeepsOrderAndSkipsBadReplies) {
  std::map<std::string, std::vector<std::string>> canned{
      {"a",
       {R"({"label":"contradiction","prob":{"entailment":0.1,"contradiction":0.8,"uncertain":0.1}})",
        "garbage"}},
      {"b", {"garbage"}}};
  MockJudgeClient client(canned);
  std::vector<JudgeInstance> insts{instance("a"), instance("b"), instance("c")};
  JudgeSettings settings;
  settings.rounds = 3;
  settings.max_in_flight = 2;
  const auto outcomes = judge_all(client, insts, settings);
  ASSERT_EQ(outcomes.size(), 3u);
  EXPECT_EQ(outcomes[0].id, "a");
  ASSERT_TRUE(outcomes[0].judgment.has_value());
  EXPECT_EQ(outcomes[0].judgment->rounds, 2u);  // rounds 0 and 2 parse
  EXPECT_EQ(outcomes[0].judgment->y_hall, 1);
  EXPECT_FALSE(outcomes[1].judgment.has_value());
  EXPECT_TRUE(outcomes[2].judgment.has_value());

  const std::string jsonl = verdicts_jsonl(outcomes);
  const auto first = json::parse(jsonl.substr(0, jsonl.find('\n')));
  EXPECT_EQ(first["id"], "a");
  EXPECT_EQ(first["label"], "contradiction");

  // Same inputs give identical outcomes regardless of scheduling.
  EXPECT_EQ(verdicts_jsonl(judge_all(client, insts, settings)), jsonl);
}

TEST(MockJudge, ApplyJudgmentsSetsLabelsAndProbs) {
  std::mt19937_64 rng(3);
  Dataset ds = fstest::random_dataset(fstest::tiny_schema(), 2, rng);
  ds.records[0].label.reset();
  AggregatedJudgment j;
  j.mean_probs = {0.2, 0.5, 0.3};
  j.p_hall = 0.8;
  j.y_hall = 1;
  j.rounds = 3;
  apply_judgments(ds, std::vector<LabeledJudgment>{{ds.records[0].id, j}});
  EXPECT_EQ(*ds.records[0].label, 1);
  EXPECT_EQ(*ds.records[0].judge_probs, j.mean_probs);
  EXPECT_FALSE(ds.records[1].judge_probs.has_value());
}

TEST(HttpJudge, MissingEnvironmentIsConfigError) {
  ::unsetenv("FAITHSCAN_JUDGE_URL");
  EXPECT_EQ(error_kind([] { HttpJudgeClient::from_environment(); }), ErrorKind::config);
}

TEST(HttpJudge, UnreachableEndpointIsTransportError) {
  HttpJudgeClient client("http://127.0.0.1:9", "token", 2.0);
  EXPECT_EQ(error_kind([&] { client.complete({"x", 0, judge_request(instance())}); }),
            ErrorKind::judge_transport);
}
