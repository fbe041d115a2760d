#include "faithscan/judge_client.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "faithscan/error.hpp"

namespace faithscan {

HttpJudgeClient::HttpJudgeClient(std::string url, std::string bearer_token, double timeout_seconds)
    : token_(std::move(bearer_token)), timeout_(timeout_seconds) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    fail(ErrorKind::config, fmt::format("judge URL '{}' lacks a scheme", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);
}

std::unique_ptr<HttpJudgeClient> HttpJudgeClient::from_environment() {
  const char* url = std::getenv("FAITHSCAN_JUDGE_URL");
  if (url == nullptr || *url == '\0') {
    fail(ErrorKind::config, "FAITHSCAN_JUDGE_URL is not set");
  }
  const char* token = std::getenv("FAITHSCAN_JUDGE_TOKEN");
  return std::make_unique<HttpJudgeClient>(url, token != nullptr ? token : "");
}

std::string HttpJudgeClient::complete(const JudgeCall& call) {
  httplib::Client client(base_);
  const auto secs = static_cast<time_t>(timeout_);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  auto res = client.Post(path_, headers, call.payload.dump(), "application/json");
  if (!res) {
    fail(ErrorKind::judge_transport,
         fmt::format("judge request for '{}' round {} failed: {}", call.id, call.round,
                     httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    fail(ErrorKind::judge_transport,
         fmt::format("judge returned HTTP {} for '{}' round {}", res->status, call.id, call.round));
  }
  try {
    const auto body = nlohmann::json::parse(res->body);
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::judge_transport,
         fmt::format("unexpected judge response for '{}': {}", call.id, e.what()));
  }
}

MockJudgeClient::MockJudgeClient(std::map<std::string, std::vector<std::string>> canned)
    : canned_(std::move(canned)) {}

namespace {

std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string MockJudgeClient::synthesized_reply(const std::string& id, std::size_t round) {
  std::uint64_t h = fnv1a(fmt::format("{}#{}", id, round));
  Simplex3 probs{};
  double sum = 0.0;
  for (double& p : probs) {
    h = fnv1a("mix", h);
    p = 1.0 + static_cast<double>(h % 1000);
    sum += p;
  }
  for (double& p : probs) p /= sum;
  const auto top = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  const nlohmann::json reply{{"label", to_string(static_cast<JudgeLabel>(top))},
                             {"prob",
                              {{"entailment", probs[0]},
                               {"contradiction", probs[1]},
                               {"uncertain", probs[2]}}}};
  return reply.dump();
}

std::string MockJudgeClient::complete(const JudgeCall& call) {
  const auto it = canned_.find(call.id);
  if (it != canned_.end() && !it->second.empty()) {
    return it->second[call.round % it->second.size()];
  }
  return synthesized_reply(call.id, call.round);
}

std::vector<JudgeOutcome> judge_all(JudgeClient& client, const std::vector<JudgeInstance>& instances,
                                    const JudgeSettings& settings) {
  if (settings.rounds == 0) fail(ErrorKind::config, "judging needs at least one round");
  if (settings.max_in_flight == 0) fail(ErrorKind::config, "max_in_flight must be positive");

  // Build every payload up front so template errors surface before any traffic.
  std::vector<nlohmann::json> payloads;
  payloads.reserve(instances.size());
  for (const auto& inst : instances) payloads.push_back(judge_request(inst, settings));

  const std::size_t total = instances.size() * settings.rounds;
  std::vector<std::string> replies(total);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      const std::size_t i = task / settings.rounds;
      const std::size_t round = task % settings.rounds;
      try {
        replies[task] = client.complete({instances[i].id, round, payloads[i]});
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        stop = true;
      }
    }
  };
  const std::size_t n_threads = std::min(settings.max_in_flight, std::max<std::size_t>(total, 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<JudgeOutcome> outcomes;
  outcomes.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    JudgeOutcome out;
    out.id = instances[i].id;
    std::vector<JudgeVerdict> parsed;
    for (std::size_t r = 0; r < settings.rounds; ++r) {
      try {
        parsed.push_back(parse_verdict(replies[i * settings.rounds + r]));
        out.rounds.emplace_back(parsed.back());
      } catch (const Error& e) {
        spdlog::warn("skipping verdict for '{}' round {} ({}): {}", out.id, r, to_string(e.kind()),
                     e.what());
        out.rounds.emplace_back(std::nullopt);
      }
    }
    if (!parsed.empty()) {
      out.judgment = aggregate_rounds(parsed);
    } else {
      spdlog::warn("no usable verdict for '{}'; record left unlabeled", out.id);
    }
    outcomes.push_back(std::move(out));
  }
  return outcomes;
}

std::string verdicts_jsonl(const std::vector<JudgeOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) {
    for (std::size_t r = 0; r < o.rounds.size(); ++r) {
      if (!o.rounds[r]) continue;
      out += verdict_row(o.id, r, *o.rounds[r]).dump();
      out += '\n';
    }
  }
  return out;
}

}  // namespace faithscan
