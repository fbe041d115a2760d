#pragma once

#include <cstddef>
#include <cstdint>

#include "faithscan/featureset.hpp"

namespace faithscan {

// Desk-scale fixture: the label is planted as a mean shift of `margin` along
// a random unit direction in token_emb; every other channel is label-free noise.
// The direction depends only on `task_seed`, so train and test sets drawn with
// different record seeds share the same planted signal.
struct SynthSpec {
  std::size_t n_records = 200;
  double positive_fraction = 0.5;
  std::size_t d_h = 16;
  std::size_t d_v = 8;
  std::size_t d_align = 8;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 24;
  std::size_t n_patches = 16;
  std::size_t n_aligned = 8;
  double margin = 5.0;
  double noise = 1.0;  // per-entry standard deviation of token_emb
  Split split = Split::train;
  MaxLengths max_lengths{};
  std::uint64_t task_seed = 0;
};

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace faithscan
