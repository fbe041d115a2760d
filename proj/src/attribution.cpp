#include "faithscan/attribution.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "faithscan/error.hpp"

namespace faithscan {

std::vector<BranchInput> probability_input_gradients(const Detector& model,
                                                     std::span<const BranchInput> inputs,
                                                     double* prob) {
  const ForwardTrace tr = model.forward(inputs);
  // d sigma / d logit; the gradient is taken on the probability, not the logit.
  const double dprob = tr.prob * (1.0 - tr.prob);
  std::vector<double> scratch(model.params().size(), 0.0);
  std::vector<BranchInput> grads;
  model.backward(tr, inputs, dprob, scratch, &grads);
  if (prob != nullptr) *prob = tr.prob;
  return grads;
}

AttributionMap grad_x_input(const FeatureRecord& record, const Detector& model,
                            bool include_visual) {
  model.check_record(record);
  const std::vector<BranchInput> inputs = make_inputs(record, model.spec());
  AttributionMap map;
  map.id = record.id;
  const std::vector<BranchInput> grads = probability_input_gradients(model, inputs, &map.prob);

  for (Source s : kAllSources) {
    if (!is_text_source(s) && !include_visual) continue;
    ChannelAttribution ch;
    bool used = false;
    ch.source = s;
    ch.rows = record.stored_rows(s);
    ch.cols = record.feature_dim(s);
    ch.actual = record.actual_length(s);
    ch.values.assign(ch.rows * ch.cols, 0.0);
    const auto& branches = model.spec().branches;
    for (std::size_t k = 0; k < branches.size(); ++k) {
      if (branches[k].source != s) continue;
      used = true;
      const BranchInput& g = grads[k];
      for (std::size_t r = 0; r < g.actual; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
          ch.values[r * ch.cols + c] += g.at(r, c) * inputs[k].at(r, c);
        }
      }
    }
    if (!used) continue;
    for (double v : ch.values) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::non_finite,
             fmt::format("record '{}': non-finite attribution in {}", record.id, to_string(s)));
      }
    }
    map.channels.push_back(std::move(ch));
  }
  return map;
}

std::vector<TokenAttribution> aggregate_tokens(const AttributionMap& map) {
  std::vector<TokenAttribution> out;
  for (const auto& ch : map.channels) {
    TokenAttribution t;
    t.source = ch.source;
    t.per_token.assign(ch.rows, 0.0);
    for (std::size_t r = 0; r < ch.rows; ++r) {
      for (std::size_t c = 0; c < ch.cols; ++c) t.per_token[r] += ch.at(r, c);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::optional<std::vector<std::string>> answer_tokens(const FeatureRecord& record) {
  const auto it = record.meta.find("answer_tokens");
  if (it == record.meta.end()) return std::nullopt;
  try {
    return nlohmann::json::parse(it->second).get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    spdlog::warn("record '{}': ignoring malformed answer_tokens ({})", record.id, e.what());
    return std::nullopt;
  }
}

std::string attribution_jsonl(const FeatureRecord& record, const AttributionMap& map) {
  const auto tokens = answer_tokens(record);
  const auto agg = aggregate_tokens(map);
  std::string out;
  for (std::size_t t = 0; t < record.lengths.tokens; ++t) {
    for (const auto& a : agg) {
      if (t >= a.per_token.size() || !is_text_source(a.source)) continue;
      nlohmann::json row{{"id", record.id},
                         {"token", t},
                         {"channel", to_string(a.source)},
                         {"value", a.per_token[t]}};
      if (tokens && t < tokens->size()) row["text"] = (*tokens)[t];
      out += row.dump();
      out += '\n';
    }
  }
  return out;
}

std::string attribution_heatmap_csv(const FeatureRecord& record, const AttributionMap& map,
                                    bool with_header) {
  const auto agg = aggregate_tokens(map);
  std::string out;
  if (with_header) {
    out += "id,token";
    for (const auto& a : agg) {
      if (is_text_source(a.source)) out += fmt::format(",{}", to_string(a.source));
    }
    out += '\n';
  }
  for (std::size_t t = 0; t < record.lengths.tokens; ++t) {
    out += fmt::format("{},{}", record.id, t);
    for (const auto& a : agg) {
      if (is_text_source(a.source)) out += fmt::format(",{:.9g}", a.per_token[t]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace faithscan
