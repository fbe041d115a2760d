#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faithscan/featureset.hpp"

namespace faithscan {

inline constexpr double kMinSRef = 0.05;
inline constexpr std::size_t kDefaultStochSamples = 5;
inline constexpr std::size_t kDefaultReflectionRounds = 3;

struct WeightCombination {
  double lambda_nli = 0.0;
  double lambda_stoch = 0.0;
  double lambda_ref = 1.0;

  bool operator==(const WeightCombination&) const = default;
};

void validate_weight_combination(const WeightCombination& lambdas);

// 1 - H(p)/ln 3 with 0 log 0 = 0.
double s_nli(const Simplex3& mean_probs);
// exp(-population variance) of the per-sample hallucination masses.
double s_stoch(std::span<const double> hall_scores);
// Reflection agreement with the assigned label, floored at kMinSRef.
double s_ref(std::span<const double> reflection_scores, int y_hall);

double combine_raw_weight(const ReliabilitySignals& signals, const WeightCombination& lambdas);

// Divides each weight by the mean raw weight of its class.
std::vector<double> class_normalize(std::span<const double> raw_weights, std::span<const int> labels);

// Reads "support_score" from a reflection reply. Unparseable or out-of-range
// replies yield 0.5 and a warning.
double parse_reflection(std::string_view raw);

// Fills the bundled reflection template.
std::string reflection_prompt(const std::string& question, const std::string& answer);

// Per-record inputs collected outside this library.
struct ReliabilityInputs {
  std::vector<double> stoch_hall_scores;   // h^(m), one per stochastic sample
  std::vector<double> reflection_scores;   // r^(t), one per reflection round
};

// JSON lines: {"id", "stoch_hall_scores": [..], "reflection_scores": [..]}.
// A reflection entry may be a number or the raw reply text.
std::map<std::string, ReliabilityInputs> parse_reliability_jsonl(std::string_view text);

// Computes signals and class-normalized weights for every record. Records need
// a label and judge_probs, and an entry in `inputs`.
Dataset apply_reliability(const Dataset& dataset,
                          const std::map<std::string, ReliabilityInputs>& inputs,
                          const WeightCombination& lambdas);

// CSV (signal,bucket_lo,bucket_hi,label,count) over equal-width buckets on [0, 1].
std::string reliability_histogram_csv(const Dataset& dataset, std::size_t buckets = 10);

}  // namespace faithscan
