#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace faithscan {

// Mann-Whitney estimate of P(score_pos > score_neg), ties credited 0.5.
// Requires both classes.
double auroc(std::span<const double> scores, std::span<const int> labels);

// 1 - 2|p - 0.5|: 1 at p = 0.5, 0 at p in {0, 1}.
double supervised_uncertainty(double p);

enum class RejectionMode {
  // values are predicted probabilities; prediction = value > 0.5; ordered by
  // supervised_uncertainty.
  supervised,
  // values are hallucination scores; "correct" means label == 0; ordered by
  // the score itself.
  score_based,
};

std::string_view to_string(RejectionMode mode);
RejectionMode rejection_mode_from_string(std::string_view name);

// Accuracy of the accepted set after rejecting the k most uncertain samples,
// for k = 0 .. n-1. Rejection order: uncertainty descending, then input index
// ascending.
std::vector<double> rejection_curve(std::span<const double> values, std::span<const int> labels,
                                    RejectionMode mode);

// Rectangle-rule area: mean of the n rejection-curve accuracies.
double aurac(std::span<const double> values, std::span<const int> labels, RejectionMode mode);

// Accuracy after rejecting floor(n * fraction) most uncertain samples.
// fraction must lie in [0, 1).
double rejacc_at(std::span<const double> values, std::span<const int> labels, double fraction,
                 RejectionMode mode);

struct F1Result {
  double f1 = 0.0;
  double threshold = 0.0;  // predict positive when score >= threshold; may be +-inf
};

// Best F1 for the positive (hallucinated) class over every distinct-score
// threshold plus the -inf/+inf sentinels; ties go to the lower threshold.
F1Result f1_best(std::span<const double> scores, std::span<const int> labels);

// F1 at one fixed threshold (score >= threshold predicts positive).
double f1_at(std::span<const double> scores, std::span<const int> labels, double threshold);

struct AgreementReport {
  double agreement = 0.0;
  double kappa = 0.0;
  double mcc = 0.0;
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// `reference` plays the role of ground truth (e.g. human labels) and
// `predicted` the labels under test (e.g. judge-derived labels).
AgreementReport agreement_stats(std::span<const int> reference, std::span<const int> predicted);
AgreementReport agreement_from_counts(std::size_t tp, std::size_t tn, std::size_t fp,
                                      std::size_t fn);

struct EvalReport {
  double auroc = 0.0;
  double aurac = 0.0;
  double f1_best = 0.0;
  double f1_best_threshold = 0.0;
  double rejacc50 = 0.0;
  std::size_t n = 0;
};

EvalReport evaluate(std::span<const double> values, std::span<const int> labels,
                    RejectionMode mode);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const AgreementReport& report);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct PrPoint {
  double threshold;
  double recall;
  double precision;
};

// One point per distinct score threshold (descending), starting at (0, 0).
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels);
std::vector<PrPoint> pr_points(std::span<const double> scores, std::span<const int> labels);

std::string rejection_curve_csv(std::span<const double> values, std::span<const int> labels,
                                RejectionMode mode);
std::string roc_csv(std::span<const double> scores, std::span<const int> labels);
std::string pr_csv(std::span<const double> scores, std::span<const int> labels);

}  // namespace faithscan
