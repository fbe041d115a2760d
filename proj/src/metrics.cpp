#include "faithscan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "faithscan/error.hpp"

namespace faithscan {

namespace {

void check_inputs(std::span<const double> values, std::span<const int> labels) {
  if (values.size() != labels.size()) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("{} scores but {} labels", values.size(), labels.size()));
  }
  if (values.empty()) fail(ErrorKind::invalid_argument, "metrics need at least one sample");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorKind::non_finite, fmt::format("score {} is not finite", i));
    }
    if (labels[i] != 0 && labels[i] != 1) {
      fail(ErrorKind::invalid_argument, fmt::format("label {} is {}, expected 0 or 1", i, labels[i]));
    }
  }
}

std::size_t count_positive(std::span<const int> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

// Indices sorted by descending score, index ascending among ties.
std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

struct RejectionInputs {
  std::vector<double> uncertainty;
  std::vector<char> correct;
};

RejectionInputs rejection_inputs(std::span<const double> values, std::span<const int> labels,
                                 RejectionMode mode) {
  RejectionInputs out;
  out.uncertainty.resize(values.size());
  out.correct.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mode == RejectionMode::supervised) {
      out.uncertainty[i] = supervised_uncertainty(values[i]);
      const int pred = values[i] > 0.5 ? 1 : 0;
      out.correct[i] = pred == labels[i];
    } else {
      out.uncertainty[i] = values[i];
      out.correct[i] = labels[i] == 0;
    }
  }
  return out;
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  const std::size_t n_pos = count_positive(labels);
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorKind::single_class, "AUROC is undefined when only one class is present");
  }

  // Rank sum of positives with mid-ranks for ties (ranks are 1-based, doubled
  // to stay integral).
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double twice_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_mid = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) twice_rank_sum += twice_mid;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = (twice_rank_sum - np * (np + 1.0)) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double supervised_uncertainty(double p) { return 1.0 - 2.0 * std::abs(p - 0.5); }

std::string_view to_string(RejectionMode mode) {
  return mode == RejectionMode::supervised ? "supervised" : "score_based";
}

RejectionMode rejection_mode_from_string(std::string_view name) {
  if (name == "supervised") return RejectionMode::supervised;
  if (name == "score_based") return RejectionMode::score_based;
  fail(ErrorKind::invalid_argument, fmt::format("unknown rejection mode '{}'", name));
}

std::vector<double> rejection_curve(std::span<const double> values, std::span<const int> labels,
                                    RejectionMode mode) {
  check_inputs(values, labels);
  const std::size_t n = values.size();
  const RejectionInputs in = rejection_inputs(values, labels, mode);
  const std::vector<std::size_t> order = order_descending(in.uncertainty);

  // Accepted set after rejecting k = suffix order[k..n); accumulate from the back.
  std::vector<std::size_t> correct_suffix(n + 1, 0);
  for (std::size_t k = n; k-- > 0;) {
    correct_suffix[k] = correct_suffix[k + 1] + (in.correct[order[k]] ? 1 : 0);
  }
  std::vector<double> curve(n);
  for (std::size_t k = 0; k < n; ++k) {
    curve[k] = static_cast<double>(correct_suffix[k]) / static_cast<double>(n - k);
  }
  return curve;
}

double aurac(std::span<const double> values, std::span<const int> labels, RejectionMode mode) {
  const std::vector<double> curve = rejection_curve(values, labels, mode);
  double sum = 0.0;
  for (double a : curve) sum += a;
  return sum / static_cast<double>(curve.size());
}

double rejacc_at(std::span<const double> values, std::span<const int> labels, double fraction,
                 RejectionMode mode) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    fail(ErrorKind::invalid_argument,
         fmt::format("rejection fraction {} must lie in [0, 1)", fraction));
  }
  const std::vector<double> curve = rejection_curve(values, labels, mode);
  const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(curve.size()) * fraction));
  return curve[std::min(k, curve.size() - 1)];
}

double f1_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i] == 1) ++tp;
    if (pred && labels[i] == 0) ++fp;
    if (!pred && labels[i] == 1) ++fn;
  }
  return f1_from_counts(tp, fp, fn);
}

F1Result f1_best(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  const std::size_t n_pos = count_positive(labels);
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Walk thresholds from high to low; at each distinct score all samples with
  // score >= threshold are predicted positive.
  struct Candidate {
    double threshold;
    double f1;
  };
  std::vector<Candidate> candidates;
  candidates.push_back({inf, f1_from_counts(0, 0, n_pos)});
  const std::vector<std::size_t> order = order_descending(scores);
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    const double s = scores[order[i]];
    while (i < n && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    candidates.push_back({s, f1_from_counts(tp, fp, n_pos - tp)});
  }
  candidates.push_back({-inf, f1_from_counts(n_pos, n - n_pos, 0)});

  // Candidates are in descending threshold order; >= keeps the lowest among ties.
  F1Result best{-1.0, inf};
  for (const auto& c : candidates) {
    if (c.f1 >= best.f1) best = {c.f1, c.threshold};
  }
  return best;
}

AgreementReport agreement_from_counts(std::size_t tp, std::size_t tn, std::size_t fp,
                                      std::size_t fn) {
  const std::size_t n = tp + tn + fp + fn;
  if (n == 0) fail(ErrorKind::invalid_argument, "agreement needs at least one pair");
  AgreementReport r;
  r.tp = tp;
  r.tn = tn;
  r.fp = fp;
  r.fn = fn;
  const double dn = static_cast<double>(n);
  const double dtp = static_cast<double>(tp), dtn = static_cast<double>(tn);
  const double dfp = static_cast<double>(fp), dfn = static_cast<double>(fn);
  r.agreement = (dtp + dtn) / dn;

  const double p_e = ((dtp + dfp) * (dtp + dfn) + (dtn + dfn) * (dtn + dfp)) / (dn * dn);
  if (p_e == 1.0) {
    r.kappa = r.agreement == 1.0 ? 1.0 : 0.0;
  } else {
    r.kappa = (r.agreement - p_e) / (1.0 - p_e);
  }

  const double denom = std::sqrt((dtp + dfp) * (dtp + dfn) * (dtn + dfp) * (dtn + dfn));
  if (denom == 0.0) {
    r.mcc = r.agreement == 1.0 ? 1.0 : 0.0;
  } else {
    r.mcc = (dtp * dtn - dfp * dfn) / denom;
  }
  return r;
}

AgreementReport agreement_stats(std::span<const int> reference, std::span<const int> predicted) {
  if (reference.size() != predicted.size()) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("{} reference labels but {} predicted", reference.size(), predicted.size()));
  }
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const int a = reference[i], b = predicted[i];
    if ((a != 0 && a != 1) || (b != 0 && b != 1)) {
      fail(ErrorKind::invalid_argument, fmt::format("pair {} has a non-binary label", i));
    }
    if (a == 1 && b == 1) ++tp;
    else if (a == 0 && b == 0) ++tn;
    else if (a == 0 && b == 1) ++fp;
    else ++fn;
  }
  return agreement_from_counts(tp, tn, fp, fn);
}

EvalReport evaluate(std::span<const double> values, std::span<const int> labels,
                    RejectionMode mode) {
  EvalReport r;
  r.n = values.size();
  r.auroc = auroc(values, labels);
  r.aurac = aurac(values, labels, mode);
  r.rejacc50 = rejacc_at(values, labels, 0.5, mode);
  const F1Result f1 = f1_best(values, labels);
  r.f1_best = f1.f1;
  // -inf means "everything positive"; report the lowest meaningful cut instead.
  r.f1_best_threshold = std::isinf(f1.threshold) && f1.threshold < 0 ? 0.0 : f1.threshold;
  return r;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["auroc"] = report.auroc;
  j["aurac"] = report.aurac;
  j["f1_best"] = report.f1_best;
  if (std::isfinite(report.f1_best_threshold)) {
    j["f1_best_threshold"] = report.f1_best_threshold;
  } else {
    j["f1_best_threshold"] = nullptr;
  }
  j["rejacc50"] = report.rejacc50;
  j["n"] = report.n;
  return j;
}

nlohmann::json to_json(const AgreementReport& report) {
  return {{"agreement", report.agreement}, {"kappa", report.kappa}, {"mcc", report.mcc},
          {"tp", report.tp},               {"tn", report.tn},       {"fp", report.fp},
          {"fn", report.fn}};
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n_pos = count_positive(labels);
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::single_class, "ROC needs both classes");
  std::vector<RocPoint> points{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  const std::vector<std::size_t> order = order_descending(scores);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    points.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                      static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return points;
}

std::vector<PrPoint> pr_points(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n_pos = count_positive(labels);
  if (n_pos == 0) fail(ErrorKind::single_class, "PR curve needs positive samples");
  std::vector<PrPoint> points;
  const std::vector<std::size_t> order = order_descending(scores);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    points.push_back({s, static_cast<double>(tp) / static_cast<double>(n_pos),
                      static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return points;
}

std::string rejection_curve_csv(std::span<const double> values, std::span<const int> labels,
                                RejectionMode mode) {
  const std::vector<double> curve = rejection_curve(values, labels, mode);
  std::string out = "rejected,fraction,accuracy\n";
  const double n = static_cast<double>(curve.size());
  for (std::size_t k = 0; k < curve.size(); ++k) {
    out += fmt::format("{},{:.6f},{:.9g}\n", k, static_cast<double>(k) / n, curve[k]);
  }
  return out;
}

std::string roc_csv(std::span<const double> scores, std::span<const int> labels) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : roc_points(scores, labels)) {
    out += fmt::format("{:.9g},{:.9g},{:.9g}\n", p.threshold, p.fpr, p.tpr);
  }
  return out;
}

std::string pr_csv(std::span<const double> scores, std::span<const int> labels) {
  std::string out = "threshold,recall,precision\n";
  for (const auto& p : pr_points(scores, labels)) {
    out += fmt::format("{:.9g},{:.9g},{:.9g}\n", p.threshold, p.recall, p.precision);
  }
  return out;
}

}  // namespace faithscan
