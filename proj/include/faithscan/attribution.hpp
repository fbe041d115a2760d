#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "faithscan/detector.hpp"
#include "faithscan/featureset.hpp"

namespace faithscan {

// Grad x input for one source, covering every stored row (padded rows are 0).
struct ChannelAttribution {
  Source source = Source::token_ll;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t actual = 0;
  std::vector<double> values;  // rows x cols

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct AttributionMap {
  std::string id;
  double prob = 0.0;
  std::vector<ChannelAttribution> channels;
};

// d prob / d x times x for each entry of the text-side channels the model
// consumes (token_ll, token_ent, token_emb); visual channels only on request.
AttributionMap grad_x_input(const FeatureRecord& record, const Detector& model,
                            bool include_visual = false);

// Raw input gradients d prob / d x per model branch (only actual rows).
std::vector<BranchInput> probability_input_gradients(const Detector& model,
                                                     std::span<const BranchInput> inputs,
                                                     double* prob = nullptr);

struct TokenAttribution {
  Source source = Source::token_ll;
  std::vector<double> per_token;  // sum over the feature dimension
};

std::vector<TokenAttribution> aggregate_tokens(const AttributionMap& map);

// Token strings from meta["answer_tokens"] (a JSON array), when present.
std::optional<std::vector<std::string>> answer_tokens(const FeatureRecord& record);

// One line per (token, channel) over actual tokens:
// {"id", "token", "channel", "value", "text"?}.
std::string attribution_jsonl(const FeatureRecord& record, const AttributionMap& map);

// Header "id,token,<channel>..." then one row per actual token.
std::string attribution_heatmap_csv(const FeatureRecord& record, const AttributionMap& map,
                                    bool with_header = true);

}  // namespace faithscan
