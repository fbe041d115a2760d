#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

namespace fstest {

std::optional<ErrorKind> error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

Schema tiny_schema(std::size_t d_h, std::size_t d_v, std::size_t d_align, MaxLengths max) {
  Schema s;
  s.d_h = d_h;
  s.d_v = d_v;
  s.d_align = d_align;
  s.max_lengths = max;
  return s;
}

FeatureRecord random_record(const Schema& schema, std::mt19937_64& rng, const std::string& id,
                            int label) {
  std::normal_distribution<double> normal;
  const auto& mx = schema.max_lengths;
  auto draw = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  FeatureRecord r;
  r.id = id;
  r.lengths = {draw(1, mx.tokens), draw(0, mx.patches), draw(0, mx.aligned)};
  r.token_ll.assign(mx.tokens, 0.0f);
  r.token_ent.assign(mx.tokens, 0.0f);
  r.token_emb = Matrix(mx.tokens, schema.d_h);
  r.mm_patch = Matrix(mx.patches, schema.d_v);
  r.mm_align = Matrix(mx.aligned, schema.d_align);
  for (std::size_t t = 0; t < r.lengths.tokens; ++t) {
    r.token_ll[t] = static_cast<float>(-std::abs(normal(rng)));
    r.token_ent[t] = static_cast<float>(std::abs(normal(rng)));
    for (std::size_t c = 0; c < schema.d_h; ++c) r.token_emb.at(t, c) = static_cast<float>(normal(rng));
  }
  for (std::size_t t = 0; t < r.lengths.patches; ++t) {
    for (std::size_t c = 0; c < schema.d_v; ++c) r.mm_patch.at(t, c) = static_cast<float>(normal(rng));
  }
  for (std::size_t t = 0; t < r.lengths.aligned; ++t) {
    for (std::size_t c = 0; c < schema.d_align; ++c) {
      r.mm_align.at(t, c) = static_cast<float>(normal(rng));
    }
  }
  if (label >= 0) r.label = label;
  return r;
}

Dataset random_dataset(const Schema& schema, std::size_t n, std::mt19937_64& rng) {
  Dataset ds{schema, Split::train, {}};
  for (std::size_t i = 0; i < n; ++i) {
    ds.records.push_back(random_record(schema, rng, fmt::format("r{:04d}", i), static_cast<int>(i % 2)));
  }
  return ds;
}

ModelSpec random_tiny_spec(const Schema& schema, std::mt19937_64& rng, std::size_t variant) {
  static constexpr EncoderKind kinds[] = {EncoderKind::linear_pool, EncoderKind::seq_compressor,
                                          EncoderKind::conv_pool, EncoderKind::linear_mean};
  const std::size_t K = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
  const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
  std::vector<Source> sources(kAllSources.begin(), kAllSources.end());
  std::shuffle(sources.begin(), sources.end(), rng);

  ModelSpec spec;
  for (std::size_t k = 0; k < K; ++k) {
    BranchSpec b;
    b.source = sources[k];
    b.encoder_kind = kinds[(variant + k) % 4];
    b.in_dim = schema.dim(b.source);
    b.out_dim = d;
    spec.branches.push_back(b);
  }
  spec.fusion.gated = variant % 2 == 0;
  spec.fusion.score_activation = (variant / 2) % 2 == 0 ? Activation::gelu : Activation::tanh;
  spec.fusion.gate_activation = (variant / 4) % 2 == 0 ? Activation::tanh : Activation::sigmoid;
  spec.fusion.attn_dim = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
  return spec;
}

Detector jittered_detector(const ModelSpec& spec, std::uint64_t seed, double jitter) {
  Detector det = Detector::initialized(spec, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, jitter);
  for (double& v : det.params().values()) v += normal(rng);
  return det;
}

double brute_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  double n_pos = 0.0, n_neg = 0.0;
  for (int l : labels) (l == 1 ? n_pos : n_neg) += 1.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  pairs = n_pos * n_neg;
  return wins / pairs;
}

namespace {

double uncertainty_of(double v, RejectionMode mode) {
  return mode == RejectionMode::supervised ? 1.0 - 2.0 * std::abs(v - 0.5) : v;
}

bool correct_of(double v, int label, RejectionMode mode) {
  if (mode == RejectionMode::supervised) return (v > 0.5 ? 1 : 0) == label;
  return label == 0;
}

// Rejection order by repeated selection: highest uncertainty, lowest index.
std::vector<std::size_t> selection_order(const std::vector<double>& values, RejectionMode mode) {
  const std::size_t n = values.size();
  std::vector<bool> taken(n, false);
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || uncertainty_of(values[i], mode) > uncertainty_of(values[best], mode)) best = i;
    }
    taken[best] = true;
    order.push_back(best);
  }
  return order;
}

}  // namespace

std::vector<double> brute_rejection_curve(const std::vector<double>& values,
                                          const std::vector<int>& labels, RejectionMode mode) {
  const std::size_t n = values.size();
  const auto order = selection_order(values, mode);
  std::vector<double> curve;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<bool> rejected(n, false);
    for (std::size_t j = 0; j < k; ++j) rejected[order[j]] = true;
    std::size_t correct = 0, accepted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rejected[i]) continue;
      ++accepted;
      if (correct_of(values[i], labels[i], mode)) ++correct;
    }
    curve.push_back(static_cast<double>(correct) / static_cast<double>(accepted));
  }
  return curve;
}

double brute_aurac(const std::vector<double>& values, const std::vector<int>& labels,
                   RejectionMode mode) {
  const auto curve = brute_rejection_curve(values, labels, mode);
  double sum = 0.0;
  for (double a : curve) sum += a;
  return sum / static_cast<double>(curve.size());
}

double brute_rejacc(const std::vector<double>& values, const std::vector<int>& labels,
                    double fraction, RejectionMode mode) {
  const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(values.size()) * fraction));
  return brute_rejection_curve(values, labels, mode)[k];
}

std::pair<double, double> brute_f1_best(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  std::set<double> thresholds(scores.begin(), scores.end());
  thresholds.insert(std::numeric_limits<double>::infinity());
  thresholds.insert(-std::numeric_limits<double>::infinity());
  double best_f1 = -1.0;
  double best_t = 0.0;
  // Ascending thresholds with strict improvement keep the lowest among ties.
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i] >= t;
      if (pred && labels[i] == 1) ++tp;
      if (pred && labels[i] == 0) ++fp;
      if (!pred && labels[i] == 1) ++fn;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    const double f1 = denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return {best_f1, best_t};
}

}  // namespace fstest
