#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithscan/supervision.hpp"

namespace faithscan {

struct JudgeCall {
  std::string id;
  std::size_t round = 0;
  nlohmann::json payload;
};

// Sends one request payload and returns the judge's raw text reply.
// Implementations must be safe to call from several threads at once.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const JudgeCall& call) = 0;
};

// POSTs the payload to an OpenAI-compatible chat-completions endpoint and
// returns choices[0].message.content. Transport failures throw judge_transport.
class HttpJudgeClient final : public JudgeClient {
 public:
  HttpJudgeClient(std::string url, std::string bearer_token, double timeout_seconds = 120.0);
  std::string complete(const JudgeCall& call) override;

  // Reads FAITHSCAN_JUDGE_URL and FAITHSCAN_JUDGE_TOKEN (token optional).
  static std::unique_ptr<HttpJudgeClient> from_environment();

 private:
  std::string base_;
  std::string path_;
  std::string token_;
  double timeout_;
};

// Deterministic in-process judge. Canned replies are looked up by id (round r
// uses entry r modulo the list size); other ids get a verdict derived from a
// hash of (id, round).
class MockJudgeClient final : public JudgeClient {
 public:
  MockJudgeClient() = default;
  explicit MockJudgeClient(std::map<std::string, std::vector<std::string>> canned);
  std::string complete(const JudgeCall& call) override;

  static std::string synthesized_reply(const std::string& id, std::size_t round);

 private:
  std::map<std::string, std::vector<std::string>> canned_;
};

struct JudgeOutcome {
  std::string id;
  std::vector<std::optional<JudgeVerdict>> rounds;  // nullopt: reply failed to parse
  std::optional<AggregatedJudgment> judgment;      // over the parsed rounds
};

// Runs settings.rounds requests per instance with at most
// settings.max_in_flight concurrent calls. Results keep input order.
// Unparseable replies are logged and skipped; transport errors propagate.
std::vector<JudgeOutcome> judge_all(JudgeClient& client, const std::vector<JudgeInstance>& instances,
                                    const JudgeSettings& settings);

std::string verdicts_jsonl(const std::vector<JudgeOutcome>& outcomes);

}  // namespace faithscan
