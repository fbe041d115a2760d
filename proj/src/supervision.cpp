#include "faithscan/supervision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "faithscan/error.hpp"
#include "faithscan/prompts.hpp"

namespace faithscan {

namespace {

constexpr std::array<const char*, 3> kProbKeys{"entailment", "contradiction", "uncertain"};

std::string_view strip(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// ```json ... ``` -> ...
std::string_view strip_fence(std::string_view s) {
  s = strip(s);
  if (s.substr(0, 3) != "```") return s;
  const auto newline = s.find('\n');
  if (newline == std::string_view::npos) return s;
  s.remove_prefix(newline + 1);
  const auto close = s.rfind("```");
  if (close != std::string_view::npos) s = s.substr(0, close);
  return strip(s);
}

}  // namespace

std::string_view to_string(JudgeLabel label) {
  return kProbKeys[static_cast<std::size_t>(label)];
}

JudgeLabel judge_label_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kProbKeys.size(); ++i) {
    if (name == kProbKeys[i]) return static_cast<JudgeLabel>(i);
  }
  fail(ErrorKind::malformed_json, fmt::format("unknown verdict label '{}'", name));
}

AggregatedJudgment aggregate_rounds(std::span<const JudgeVerdict> verdicts) {
  if (verdicts.empty()) fail(ErrorKind::invalid_argument, "cannot aggregate zero judging rounds");
  AggregatedJudgment out;
  for (const auto& v : verdicts) {
    for (std::size_t c = 0; c < 3; ++c) out.mean_probs[c] += v.probs[c];
  }
  const double r = static_cast<double>(verdicts.size());
  for (double& p : out.mean_probs) p /= r;
  out.p_hall = out.mean_probs[1] + out.mean_probs[2];
  out.y_hall = out.p_hall > out.mean_probs[0] ? 1 : 0;
  out.rounds = verdicts.size();
  return out;
}

JudgeVerdict parse_verdict(std::string_view raw) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(strip_fence(raw));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::malformed_json, fmt::format("verdict is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) fail(ErrorKind::malformed_json, "verdict must be a JSON object");
  if (!j.contains("label")) fail(ErrorKind::missing_key, "verdict lacks \"label\"");
  if (!j.contains("prob")) fail(ErrorKind::missing_key, "verdict lacks \"prob\"");
  if (!j["label"].is_string()) fail(ErrorKind::malformed_json, "\"label\" must be a string");
  const auto& prob = j["prob"];
  if (!prob.is_object()) fail(ErrorKind::malformed_json, "\"prob\" must be an object");

  JudgeVerdict v;
  v.label = judge_label_from_string(j["label"].get<std::string>());
  double sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    if (!prob.contains(kProbKeys[c])) {
      fail(ErrorKind::missing_key, fmt::format("verdict lacks prob.{}", kProbKeys[c]));
    }
    const auto& value = prob[kProbKeys[c]];
    if (!value.is_number()) {
      fail(ErrorKind::malformed_json, fmt::format("prob.{} is not a number", kProbKeys[c]));
    }
    const double p = value.get<double>();
    if (!std::isfinite(p)) fail(ErrorKind::malformed_json, "probabilities must be finite");
    if (p < 0.0) {
      fail(ErrorKind::negative_probability, fmt::format("prob.{} = {} is negative", kProbKeys[c], p));
    }
    v.probs[c] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    fail(ErrorKind::simplex_violation, fmt::format("simplex violation: probabilities sum to {}", sum));
  }
  if (sum != 1.0) {
    for (double& p : v.probs) p /= sum;
  }
  const auto argmax = static_cast<std::size_t>(
      std::max_element(v.probs.begin(), v.probs.end()) - v.probs.begin());
  if (v.probs[static_cast<std::size_t>(v.label)] < v.probs[argmax]) {
    spdlog::warn("verdict label '{}' disagrees with its most probable class '{}'", to_string(v.label),
                 kProbKeys[argmax]);
  }
  return v;
}

std::string fill_template(std::string_view tmpl,
                          std::span<const std::pair<std::string, std::string>> slots) {
  struct Hit {
    std::size_t pos;
    std::size_t len;
    const std::string* value;
  };
  std::vector<Hit> hits;
  for (const auto& [slot, value] : slots) {
    const std::string marker = "{" + slot + "}";
    const auto pos = tmpl.find(marker);
    if (pos == std::string_view::npos) {
      fail(ErrorKind::template_slot, fmt::format("template has no slot '{}'", marker));
    }
    hits.push_back({pos, marker.size(), &value});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
  std::string out;
  std::size_t cursor = 0;
  for (const auto& h : hits) {
    if (h.pos < cursor) fail(ErrorKind::template_slot, "template slots overlap");
    out.append(tmpl.substr(cursor, h.pos - cursor));
    out.append(*h.value);
    cursor = h.pos + h.len;
  }
  out.append(tmpl.substr(cursor));
  return out;
}

nlohmann::json judge_request(const JudgeInstance& instance, const JudgeSettings& settings,
                             std::optional<std::string_view> tmpl) {
  const std::pair<const char*, const std::string*> fields[] = {
      {"id", &instance.id},
      {"image", &instance.image},
      {"question", &instance.question},
      {"reference", &instance.reference},
      {"hypothesis", &instance.hypothesis}};
  for (const auto& [name, value] : fields) {
    if (strip(*value).empty()) {
      fail(ErrorKind::invalid_argument, fmt::format("judge instance field '{}' is empty", name));
    }
  }
  const std::vector<std::pair<std::string, std::string>> slots{
      {"question", instance.question},
      {"ground-truth answer", instance.reference},
      {"model output", instance.hypothesis}};
  const std::string prompt =
      fill_template(tmpl.value_or(prompts::visual_nli_template()), slots);

  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "image_url"}, {"image_url", {{"url", instance.image}}}});
  content.push_back({{"type", "text"}, {"text", prompt}});
  return {{"model", settings.model},
          {"temperature", settings.temperature},
          {"top_p", settings.top_p},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

std::string request_prompt(const nlohmann::json& payload) {
  for (const auto& part : payload.at("messages").at(0).at("content")) {
    if (part.at("type") == "text") return part.at("text").get<std::string>();
  }
  fail(ErrorKind::malformed_json, "request payload has no text part");
}

nlohmann::json verdict_row(std::string_view id, std::size_t round, const JudgeVerdict& verdict) {
  return {{"id", id},
          {"round", round},
          {"label", to_string(verdict.label)},
          {"probs",
           {{"entailment", verdict.probs[0]},
            {"contradiction", verdict.probs[1]},
            {"uncertain", verdict.probs[2]}}}};
}

void apply_judgments(Dataset& dataset, std::span<const LabeledJudgment> judgments) {
  std::unordered_map<std::string, const AggregatedJudgment*> by_id;
  for (const auto& j : judgments) by_id[j.id] = &j.judgment;
  for (auto& r : dataset.records) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) continue;
    r.label = it->second->y_hall;
    r.judge_probs = it->second->mean_probs;
  }
}

}  // namespace faithscan
