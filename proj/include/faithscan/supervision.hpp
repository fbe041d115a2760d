#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithscan/featureset.hpp"

namespace faithscan {

enum class JudgeLabel { entailment, contradiction, uncertain };

std::string_view to_string(JudgeLabel label);
JudgeLabel judge_label_from_string(std::string_view name);

// probs are ordered (entailment, contradiction, uncertain).
struct JudgeVerdict {
  JudgeLabel label = JudgeLabel::entailment;
  Simplex3 probs{1.0, 0.0, 0.0};
};

struct AggregatedJudgment {
  Simplex3 mean_probs{};
  double p_hall = 0.0;  // mean_probs[1] + mean_probs[2]
  int y_hall = 0;       // 1 iff p_hall > mean_probs[0]
  std::size_t rounds = 0;
};

inline constexpr std::size_t kDefaultJudgeRounds = 3;
inline constexpr double kSimplexTolerance = 1e-3;

AggregatedJudgment aggregate_rounds(std::span<const JudgeVerdict> verdicts);

// Parses {"label": ..., "prob": {"entailment": .., "contradiction": .., "uncertain": ..}}.
// Surrounding whitespace and a markdown code fence are tolerated.
JudgeVerdict parse_verdict(std::string_view raw);

// Replaces each `{slot}` of `tmpl` exactly once, scanning the template only
// (values are never re-scanned). Throws template_slot if a slot is absent.
std::string fill_template(std::string_view tmpl,
                          std::span<const std::pair<std::string, std::string>> slots);

struct JudgeInstance {
  std::string id;
  std::string image;       // reference resolvable by the judge endpoint
  std::string question;
  std::string reference;   // ground-truth answer
  std::string hypothesis;  // the model output under test
};

struct JudgeSettings {
  std::string model = "Qwen2.5-VL-32B-Instruct";
  double temperature = 0.1;
  double top_p = 1.0;
  std::size_t rounds = kDefaultJudgeRounds;
  std::size_t max_in_flight = 4;
};

// Fills the Visual-NLI template and wraps it as a chat-completions payload
// with the image attached. `tmpl` defaults to the bundled template.
nlohmann::json judge_request(const JudgeInstance& instance, const JudgeSettings& settings = {},
                             std::optional<std::string_view> tmpl = std::nullopt);

// Text content of the user message of a payload built by judge_request.
std::string request_prompt(const nlohmann::json& payload);

// JSON-lines row: {"id", "round", "label", "probs": {...}}.
nlohmann::json verdict_row(std::string_view id, std::size_t round, const JudgeVerdict& verdict);

// Writes labels and judge_probs; records absent from `judgments` keep their
// previous state.
struct LabeledJudgment {
  std::string id;
  AggregatedJudgment judgment;
};
void apply_judgments(Dataset& dataset, std::span<const LabeledJudgment> judgments);

}  // namespace faithscan
