#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace faithscan {

// The five internal signal sources a detector can consume.
enum class Source { token_ll, token_ent, token_emb, mm_patch, mm_align };

inline constexpr std::array<Source, 5> kAllSources = {
    Source::token_ll, Source::token_ent, Source::token_emb, Source::mm_patch, Source::mm_align};

std::string_view to_string(Source source);
Source source_from_string(std::string_view name);

// Text-side sources are the ones indexed by generated token.
inline bool is_text_source(Source s) {
  return s == Source::token_ll || s == Source::token_ent || s == Source::token_emb;
}

// Dense row-major float32 matrix; the storage type of every feature payload.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

struct Lengths {
  std::size_t tokens = 0;
  std::size_t patches = 0;
  std::size_t aligned = 0;

  bool operator==(const Lengths&) const = default;
};

struct MaxLengths {
  std::size_t tokens = 120;
  std::size_t patches = 512;
  std::size_t aligned = 512;

  bool operator==(const MaxLengths&) const = default;
};

// (entailment, contradiction, uncertain)
using Simplex3 = std::array<double, 3>;

struct ReliabilitySignals {
  double s_nli = 0.0;
  double s_stoch = 0.0;
  double s_ref = 0.0;

  bool operator==(const ReliabilitySignals&) const = default;
};

// One (image, question, answer) instance: the detector's input signals plus
// labelling and reliability metadata.
struct FeatureRecord {
  std::string id;
  std::vector<float> token_ll;   // per-token log-likelihood, <= 0
  std::vector<float> token_ent;  // per-token predictive entropy in nats, >= 0
  Matrix token_emb;              // tokens x d_h decoder hidden states
  Matrix mm_patch;               // patches x d_v raw visual embeddings
  Matrix mm_align;               // aligned tokens x d_align
  Lengths lengths;               // actual lengths; rows beyond are zero padding
  std::optional<int> label;
  std::optional<Simplex3> judge_probs;
  std::optional<ReliabilitySignals> reliability;
  std::optional<double> weight;
  std::optional<std::string> answer_text;
  std::map<std::string, std::string> meta;

  bool operator==(const FeatureRecord&) const = default;

  std::size_t actual_length(Source s) const;
  std::size_t stored_rows(Source s) const;
  std::size_t feature_dim(Source s) const;
  // Value at (row, col) of a source viewed as a rows x dim matrix.
  float value(Source s, std::size_t row, std::size_t col) const;
};

struct Schema {
  std::size_t d_h = 0;
  std::size_t d_v = 0;
  std::size_t d_align = 0;
  MaxLengths max_lengths;

  std::size_t dim(Source s) const;
  bool operator==(const Schema&) const = default;
};

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Dataset {
  Schema schema;
  Split split = Split::train;
  std::vector<FeatureRecord> records;

  bool operator==(const Dataset&) const = default;
};

// Throws Error(invalid_argument / shape_mismatch) on any invariant violation.
void validate_record(const FeatureRecord& record, const Schema& schema);
void validate_dataset(const Dataset& dataset);

// Right-truncates to at most `max` rows per source and zero-pads on the right
// to exactly `max` rows. `lengths` keeps the post-truncation actual lengths.
FeatureRecord pad_and_truncate(const FeatureRecord& record, const MaxLengths& max);

// Draws n records without replacement; deterministic for a given seed.
Dataset subsample(const Dataset& dataset, std::size_t n, std::uint64_t seed);

// Shuffles by seed and splits into (first, second) with round(fraction * n)
// records in the first part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double first_fraction,
                                          std::uint64_t seed);

std::vector<int> labels_of(const Dataset& dataset);

}  // namespace faithscan
