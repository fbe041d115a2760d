#include "faithscan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "faithscan/error.hpp"

namespace faithscan {

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_records == 0 || spec.d_h == 0 || spec.d_v == 0 || spec.d_align == 0 ||
      spec.min_tokens == 0 || spec.max_tokens < spec.min_tokens) {
    fail(ErrorKind::invalid_argument, "synthetic spec needs positive dimensions and lengths");
  }
  if (!(spec.margin >= 0.0) || !(spec.noise > 0.0)) {
    fail(ErrorKind::invalid_argument, "synthetic margin must be >= 0 and noise > 0");
  }
  if (!(spec.positive_fraction >= 0.0 && spec.positive_fraction <= 1.0)) {
    fail(ErrorKind::invalid_argument, "positive_fraction must lie in [0, 1]");
  }
  if (spec.max_tokens > spec.max_lengths.tokens || spec.n_patches > spec.max_lengths.patches ||
      spec.n_aligned > spec.max_lengths.aligned) {
    fail(ErrorKind::invalid_argument, "synthetic lengths exceed the schema maxima");
  }

  std::mt19937_64 rng(seed);
  std::mt19937_64 task_rng(spec.task_seed ^ 0x7a5c0ffeeULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> token_count(spec.min_tokens, spec.max_tokens);

  std::normal_distribution<double> task_normal(0.0, 1.0);
  std::vector<double> direction(spec.d_h);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (auto& v : direction) {
      v = task_normal(task_rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
  }
  for (auto& v : direction) v /= norm;

  const auto n_pos = static_cast<std::size_t>(
      std::llround(spec.positive_fraction * static_cast<double>(spec.n_records)));
  std::vector<int> labels(spec.n_records, 0);
  std::fill_n(labels.begin(), n_pos, 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset dataset;
  dataset.schema = {spec.d_h, spec.d_v, spec.d_align, spec.max_lengths};
  dataset.split = spec.split;
  dataset.records.reserve(spec.n_records);

  for (std::size_t i = 0; i < spec.n_records; ++i) {
    FeatureRecord r;
    r.id = fmt::format("synth-{:06d}", i);
    const std::size_t tokens = token_count(rng);
    r.lengths = {tokens, spec.n_patches, spec.n_aligned};
    r.token_ll.resize(tokens);
    r.token_ent.resize(tokens);
    r.token_emb = Matrix(tokens, spec.d_h);
    const double shift = labels[i] == 1 ? spec.margin : 0.0;
    for (std::size_t t = 0; t < tokens; ++t) {
      r.token_ll[t] = static_cast<float>(-std::abs(0.5 * normal(rng)));
      r.token_ent[t] = static_cast<float>(std::abs(normal(rng)));
      for (std::size_t c = 0; c < spec.d_h; ++c) {
        r.token_emb.at(t, c) =
            static_cast<float>(spec.noise * normal(rng) + shift * direction[c]);
      }
    }
    r.mm_patch = Matrix(spec.n_patches, spec.d_v);
    for (auto& v : r.mm_patch.data) v = static_cast<float>(normal(rng));
    r.mm_align = Matrix(spec.n_aligned, spec.d_align);
    for (auto& v : r.mm_align.data) v = static_cast<float>(normal(rng));
    r.label = labels[i];
    r.meta["generator"] = "synth";
    dataset.records.push_back(std::move(r));
  }
  return dataset;
}

}  // namespace faithscan
