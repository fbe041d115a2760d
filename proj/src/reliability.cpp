#include "faithscan/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "faithscan/error.hpp"
#include "faithscan/prompts.hpp"
#include "faithscan/supervision.hpp"

namespace faithscan {

void validate_weight_combination(const WeightCombination& l) {
  for (double v : {l.lambda_nli, l.lambda_stoch, l.lambda_ref}) {
    if (!(v >= 0.0 && std::isfinite(v))) {
      fail(ErrorKind::config, "reliability lambdas must be non-negative");
    }
  }
  if (l.lambda_nli + l.lambda_stoch + l.lambda_ref <= 0.0) {
    fail(ErrorKind::config, "at least one reliability lambda must be positive");
  }
}

double s_nli(const Simplex3& p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::simplex_violation, fmt::format("probability {} outside [0, 1]", v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    fail(ErrorKind::simplex_violation, fmt::format("probabilities sum to {}", sum));
  }
  // Entropy in base 3 directly, so the uniform simplex lands on exactly 1.
  const double ln3 = std::log(3.0);
  double h3 = 0.0;
  for (double v : p) {
    if (v > 0.0) h3 -= v * (std::log(v) / ln3);
  }
  return std::clamp(1.0 - h3, 0.0, 1.0);
}

double s_stoch(std::span<const double> h) {
  if (h.empty()) fail(ErrorKind::invalid_argument, "s_stoch needs at least one sample");
  double mean = 0.0;
  for (double v : h) {
    if (!std::isfinite(v)) fail(ErrorKind::non_finite, "non-finite stochastic score");
    mean += v;
  }
  mean /= static_cast<double>(h.size());
  double var = 0.0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= static_cast<double>(h.size());
  return std::exp(-var);
}

double s_ref(std::span<const double> r, int y_hall) {
  if (r.empty()) fail(ErrorKind::invalid_argument, "s_ref needs at least one reflection round");
  if (y_hall != 0 && y_hall != 1) fail(ErrorKind::invalid_argument, "y_hall must be 0 or 1");
  double mean = 0.0;
  for (double v : r) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::invalid_argument, fmt::format("reflection score {} outside [0, 1]", v));
    }
    mean += v;
  }
  mean /= static_cast<double>(r.size());
  return std::max(kMinSRef, y_hall == 1 ? 1.0 - mean : mean);
}

double combine_raw_weight(const ReliabilitySignals& s, const WeightCombination& l) {
  return l.lambda_nli * s.s_nli + l.lambda_stoch * s.s_stoch + l.lambda_ref * s.s_ref;
}

std::vector<double> class_normalize(std::span<const double> raw, std::span<const int> labels) {
  if (raw.size() != labels.size()) {
    fail(ErrorKind::shape_mismatch, "class_normalize needs one label per weight");
  }
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorKind::invalid_argument, "labels must be 0 or 1");
    if (!(raw[i] >= 0.0 && std::isfinite(raw[i]))) {
      fail(ErrorKind::invalid_argument, fmt::format("raw weight {} must be non-negative", raw[i]));
    }
    sum[labels[i]] += raw[i];
    ++count[labels[i]];
  }
  for (int c = 0; c < 2; ++c) {
    if (count[c] == 0) fail(ErrorKind::single_class, fmt::format("class {} has no samples", c));
    if (!(sum[c] > 0.0)) {
      fail(ErrorKind::invalid_argument, fmt::format("class {} has zero mean raw weight", c));
    }
  }
  const double mean[2] = {sum[0] / static_cast<double>(count[0]),
                          sum[1] / static_cast<double>(count[1])};
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / mean[labels[i]];
  return out;
}

double parse_reflection(std::string_view raw) {
  try {
    const auto open = raw.find('{');
    const auto close = raw.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
      throw std::runtime_error("no JSON object");
    }
    const auto j = nlohmann::json::parse(raw.substr(open, close - open + 1));
    const double v = j.at("support_score").get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("support_score outside [0, 1]");
    return v;
  } catch (const std::exception& e) {
    spdlog::warn("unusable reflection reply ({}); defaulting to 0.5", e.what());
    return 0.5;
  }
}

std::string reflection_prompt(const std::string& question, const std::string& answer) {
  const std::vector<std::pair<std::string, std::string>> slots{{"question", question},
                                                               {"answer", answer}};
  return fill_template(prompts::reflection_template(), slots);
}

std::map<std::string, ReliabilityInputs> parse_reliability_jsonl(std::string_view text) {
  std::map<std::string, ReliabilityInputs> out;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string id = j.at("id").get<std::string>();
      ReliabilityInputs in;
      in.stoch_hall_scores = j.at("stoch_hall_scores").get<std::vector<double>>();
      for (const auto& r : j.at("reflection_scores")) {
        in.reflection_scores.push_back(r.is_string() ? parse_reflection(r.get<std::string>())
                                                     : r.get<double>());
      }
      if (!out.emplace(id, std::move(in)).second) {
        fail(ErrorKind::invalid_argument, fmt::format("duplicate id '{}' in reliability inputs", id));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::malformed_json, fmt::format("reliability line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

Dataset apply_reliability(const Dataset& dataset,
                          const std::map<std::string, ReliabilityInputs>& inputs,
                          const WeightCombination& lambdas) {
  validate_weight_combination(lambdas);
  Dataset out = dataset;
  std::vector<double> raw;
  std::vector<int> labels;
  for (auto& r : out.records) {
    if (!r.label || !r.judge_probs) {
      fail(ErrorKind::invalid_argument,
           fmt::format("record '{}' needs a judge label before reliability scoring", r.id));
    }
    const auto it = inputs.find(r.id);
    if (it == inputs.end()) {
      fail(ErrorKind::invalid_argument, fmt::format("no reliability inputs for record '{}'", r.id));
    }
    ReliabilitySignals s;
    s.s_nli = s_nli(*r.judge_probs);
    s.s_stoch = s_stoch(it->second.stoch_hall_scores);
    s.s_ref = s_ref(it->second.reflection_scores, *r.label);
    r.reliability = s;
    raw.push_back(combine_raw_weight(s, lambdas));
    labels.push_back(*r.label);
  }
  const std::vector<double> w = class_normalize(raw, labels);
  for (std::size_t i = 0; i < out.records.size(); ++i) out.records[i].weight = w[i];
  return out;
}

std::string reliability_histogram_csv(const Dataset& dataset, std::size_t buckets) {
  if (buckets == 0) fail(ErrorKind::invalid_argument, "histogram needs at least one bucket");
  // counts[signal][label][bucket]
  std::vector<std::vector<std::vector<std::size_t>>> counts(
      3, std::vector<std::vector<std::size_t>>(2, std::vector<std::size_t>(buckets, 0)));
  for (const auto& r : dataset.records) {
    if (!r.reliability || !r.label) continue;
    const double v[3] = {r.reliability->s_nli, r.reliability->s_stoch, r.reliability->s_ref};
    for (std::size_t s = 0; s < 3; ++s) {
      auto b = static_cast<std::size_t>(v[s] * static_cast<double>(buckets));
      b = std::min(b, buckets - 1);
      ++counts[s][static_cast<std::size_t>(*r.label)][b];
    }
  }
  static constexpr const char* names[3] = {"s_nli", "s_stoch", "s_ref"};
  std::string out = "signal,bucket_lo,bucket_hi,label,count\n";
  const double width = 1.0 / static_cast<double>(buckets);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t label = 0; label < 2; ++label) {
      for (std::size_t b = 0; b < buckets; ++b) {
        out += fmt::format("{},{:.4f},{:.4f},{},{}\n", names[s], static_cast<double>(b) * width,
                           static_cast<double>(b + 1) * width, label, counts[s][label][b]);
      }
    }
  }
  return out;
}

}  // namespace faithscan
