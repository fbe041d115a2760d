#include "faithscan/featureset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include <fmt/format.h>

#include "faithscan/error.hpp"

namespace faithscan {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::token_ll: return "token_ll";
    case Source::token_ent: return "token_ent";
    case Source::token_emb: return "token_emb";
    case Source::mm_patch: return "mm_patch";
    case Source::mm_align: return "mm_align";
  }
  return "unknown";
}

Source source_from_string(std::string_view name) {
  for (Source s : kAllSources) {
    if (to_string(s) == name) return s;
  }
  fail(ErrorKind::invalid_argument, fmt::format("unknown source '{}'", name));
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  fail(ErrorKind::invalid_argument, fmt::format("unknown split '{}'", name));
}

std::size_t FeatureRecord::actual_length(Source s) const {
  switch (s) {
    case Source::token_ll:
    case Source::token_ent:
    case Source::token_emb: return lengths.tokens;
    case Source::mm_patch: return lengths.patches;
    case Source::mm_align: return lengths.aligned;
  }
  return 0;
}

std::size_t FeatureRecord::stored_rows(Source s) const {
  switch (s) {
    case Source::token_ll: return token_ll.size();
    case Source::token_ent: return token_ent.size();
    case Source::token_emb: return token_emb.rows;
    case Source::mm_patch: return mm_patch.rows;
    case Source::mm_align: return mm_align.rows;
  }
  return 0;
}

std::size_t FeatureRecord::feature_dim(Source s) const {
  switch (s) {
    case Source::token_ll:
    case Source::token_ent: return 1;
    case Source::token_emb: return token_emb.cols;
    case Source::mm_patch: return mm_patch.cols;
    case Source::mm_align: return mm_align.cols;
  }
  return 0;
}

float FeatureRecord::value(Source s, std::size_t row, std::size_t col) const {
  switch (s) {
    case Source::token_ll: return token_ll[row];
    case Source::token_ent: return token_ent[row];
    case Source::token_emb: return token_emb.at(row, col);
    case Source::mm_patch: return mm_patch.at(row, col);
    case Source::mm_align: return mm_align.at(row, col);
  }
  return 0.0f;
}

std::size_t Schema::dim(Source s) const {
  switch (s) {
    case Source::token_ll:
    case Source::token_ent: return 1;
    case Source::token_emb: return d_h;
    case Source::mm_patch: return d_v;
    case Source::mm_align: return d_align;
  }
  return 0;
}

namespace {

void check_matrix(const FeatureRecord& r, Source s, const Matrix& m, std::size_t dim) {
  if (m.data.size() != m.rows * m.cols) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("record '{}': {} storage size {} != {}x{}", r.id, to_string(s), m.data.size(),
                     m.rows, m.cols));
  }
  if (m.rows > 0 && m.cols != dim) {
    fail(ErrorKind::shape_mismatch, fmt::format("record '{}': {} has {} columns, schema says {}",
                                                r.id, to_string(s), m.cols, dim));
  }
}

}  // namespace

void validate_record(const FeatureRecord& r, const Schema& schema) {
  if (r.id.empty()) fail(ErrorKind::invalid_argument, "record id must be non-empty");
  if (r.token_ll.size() != r.token_ent.size() || r.token_ll.size() != r.token_emb.rows) {
    fail(ErrorKind::shape_mismatch,
         fmt::format("record '{}': token channels disagree on row count ({}, {}, {})", r.id,
                     r.token_ll.size(), r.token_ent.size(), r.token_emb.rows));
  }
  check_matrix(r, Source::token_emb, r.token_emb, schema.d_h);
  check_matrix(r, Source::mm_patch, r.mm_patch, schema.d_v);
  check_matrix(r, Source::mm_align, r.mm_align, schema.d_align);

  const auto& mx = schema.max_lengths;
  if (r.lengths.tokens > mx.tokens || r.lengths.patches > mx.patches ||
      r.lengths.aligned > mx.aligned) {
    fail(ErrorKind::invalid_argument,
         fmt::format("record '{}': actual lengths exceed schema maxima", r.id));
  }
  for (Source s : kAllSources) {
    if (r.actual_length(s) > r.stored_rows(s)) {
      fail(ErrorKind::shape_mismatch,
           fmt::format("record '{}': {} actual length {} exceeds stored rows {}", r.id,
                       to_string(s), r.actual_length(s), r.stored_rows(s)));
    }
    const std::size_t dim = r.feature_dim(s);
    for (std::size_t row = r.actual_length(s); row < r.stored_rows(s); ++row) {
      for (std::size_t c = 0; c < dim; ++c) {
        if (r.value(s, row, c) != 0.0f) {
          fail(ErrorKind::invalid_argument,
               fmt::format("record '{}': padded region of {} is not zero", r.id, to_string(s)));
        }
      }
    }
  }
  for (std::size_t t = 0; t < r.lengths.tokens; ++t) {
    if (!(r.token_ll[t] <= 0.0f)) {
      fail(ErrorKind::invalid_argument,
           fmt::format("record '{}': token_ll[{}] = {} must be <= 0", r.id, t, r.token_ll[t]));
    }
    if (!(r.token_ent[t] >= 0.0f)) {
      fail(ErrorKind::invalid_argument,
           fmt::format("record '{}': token_ent[{}] = {} must be >= 0", r.id, t, r.token_ent[t]));
    }
  }
  for (Source s : {Source::token_emb, Source::mm_patch, Source::mm_align}) {
    const Matrix& m = s == Source::token_emb ? r.token_emb
                      : s == Source::mm_patch ? r.mm_patch
                                              : r.mm_align;
    for (float v : m.data) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::non_finite, fmt::format("record '{}': non-finite {}", r.id, to_string(s)));
      }
    }
  }
  if (r.label && *r.label != 0 && *r.label != 1) {
    fail(ErrorKind::invalid_argument, fmt::format("record '{}': label must be 0 or 1", r.id));
  }
  if (r.judge_probs) {
    double sum = 0.0;
    for (double p : *r.judge_probs) {
      if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorKind::simplex_violation,
             fmt::format("record '{}': judge probability {} outside [0,1]", r.id, p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      fail(ErrorKind::simplex_violation,
           fmt::format("record '{}': judge probabilities sum to {}", r.id, sum));
    }
  }
  if (r.reliability) {
    for (double v : {r.reliability->s_nli, r.reliability->s_stoch, r.reliability->s_ref}) {
      if (!(v >= 0.0 && v <= 1.0)) {
        fail(ErrorKind::invalid_argument,
             fmt::format("record '{}': reliability score {} outside [0,1]", r.id, v));
      }
    }
  }
  if (r.weight && !(*r.weight > 0.0 && std::isfinite(*r.weight))) {
    fail(ErrorKind::invalid_argument,
         fmt::format("record '{}': weight {} must be positive", r.id, *r.weight));
  }
}

void validate_dataset(const Dataset& dataset) {
  std::unordered_set<std::string> seen;
  for (const auto& r : dataset.records) {
    validate_record(r, dataset.schema);
    if (!seen.insert(r.id).second) {
      fail(ErrorKind::invalid_argument, fmt::format("duplicate record id '{}'", r.id));
    }
  }
}

namespace {

Matrix resize_rows(const Matrix& m, std::size_t keep, std::size_t rows) {
  Matrix out(rows, m.cols);
  std::copy_n(m.data.begin(), keep * m.cols, out.data.begin());
  return out;
}

std::vector<float> resize_rows(const std::vector<float>& v, std::size_t keep, std::size_t rows) {
  std::vector<float> out(rows, 0.0f);
  std::copy_n(v.begin(), keep, out.begin());
  return out;
}

}  // namespace

FeatureRecord pad_and_truncate(const FeatureRecord& record, const MaxLengths& max) {
  if (record.lengths.tokens == 0) {
    fail(ErrorKind::invalid_argument,
         fmt::format("record '{}': a record must contain at least one generated token", record.id));
  }
  for (Source s : kAllSources) {
    if (record.actual_length(s) > record.stored_rows(s)) {
      fail(ErrorKind::shape_mismatch,
           fmt::format("record '{}': {} actual length exceeds stored rows", record.id,
                       to_string(s)));
    }
  }
  FeatureRecord out = record;
  out.lengths.tokens = std::min(record.lengths.tokens, max.tokens);
  out.lengths.patches = std::min(record.lengths.patches, max.patches);
  out.lengths.aligned = std::min(record.lengths.aligned, max.aligned);

  out.token_ll = resize_rows(record.token_ll, out.lengths.tokens, max.tokens);
  out.token_ent = resize_rows(record.token_ent, out.lengths.tokens, max.tokens);
  out.token_emb = resize_rows(record.token_emb, out.lengths.tokens, max.tokens);
  out.mm_patch = resize_rows(record.mm_patch, out.lengths.patches, max.patches);
  out.mm_align = resize_rows(record.mm_align, out.lengths.aligned, max.aligned);
  return out;
}

Dataset subsample(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n > dataset.records.size()) {
    fail(ErrorKind::invalid_argument,
         fmt::format("cannot draw {} records from a dataset of {}", n, dataset.records.size()));
  }
  std::vector<std::size_t> order(dataset.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset out{dataset.schema, dataset.split, {}};
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.records.push_back(dataset.records[order[i]]);
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double first_fraction,
                                          std::uint64_t seed) {
  if (!(first_fraction > 0.0 && first_fraction < 1.0)) {
    fail(ErrorKind::invalid_argument, "split fraction must lie in (0, 1)");
  }
  const std::size_t n = dataset.records.size();
  Dataset shuffled = subsample(dataset, n, seed);
  const auto n_first = static_cast<std::size_t>(std::llround(first_fraction * static_cast<double>(n)));
  Dataset first{dataset.schema, dataset.split, {}};
  Dataset second{dataset.schema, Split::val, {}};
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_first ? first : second).records.push_back(std::move(shuffled.records[i]));
  }
  return {std::move(first), std::move(second)};
}

std::vector<int> labels_of(const Dataset& dataset) {
  std::vector<int> labels;
  labels.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    if (!r.label) fail(ErrorKind::invalid_argument, fmt::format("record '{}' is unlabeled", r.id));
    labels.push_back(*r.label);
  }
  return labels;
}

}  // namespace faithscan
