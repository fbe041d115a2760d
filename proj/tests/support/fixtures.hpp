#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "faithscan/detector.hpp"
#include "faithscan/error.hpp"
#include "faithscan/featureset.hpp"
#include "faithscan/metrics.hpp"

namespace fstest {

using namespace faithscan;

// Kind of the faithscan::Error thrown by f, or nullopt if it returns normally.
std::optional<ErrorKind> error_kind(const std::function<void()>& f);

Schema tiny_schema(std::size_t d_h = 4, std::size_t d_v = 3, std::size_t d_align = 2,
                   MaxLengths max = {6, 5, 4});

// Random valid record, padded to the schema maxima. Lengths are drawn from
// [1, max] for tokens and [0, max] for the visual sources unless given.
FeatureRecord random_record(const Schema& schema, std::mt19937_64& rng, const std::string& id,
                            int label = -1);

Dataset random_dataset(const Schema& schema, std::size_t n, std::mt19937_64& rng);

// Small random architecture: K in 1..5 distinct sources, d in 2..8, encoder,
// gating and activations varied by `variant`.
ModelSpec random_tiny_spec(const Schema& schema, std::mt19937_64& rng, std::size_t variant);

// Initialized detector whose parameters are additionally jittered so no
// LayerNorm scale sits at exactly 1 and biases are nonzero.
Detector jittered_detector(const ModelSpec& spec, std::uint64_t seed, double jitter = 0.2);

// --- independent oracles ---------------------------------------------------

// Pair counting over every (positive, negative) pair.
double brute_auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Re-enumerates the rejection order by repeated selection and recounts the
// accepted set from scratch at every rejection level.
std::vector<double> brute_rejection_curve(const std::vector<double>& values,
                                          const std::vector<int>& labels, RejectionMode mode);
double brute_aurac(const std::vector<double>& values, const std::vector<int>& labels,
                   RejectionMode mode);
double brute_rejacc(const std::vector<double>& values, const std::vector<int>& labels,
                    double fraction, RejectionMode mode);

// Exhaustive sweep over every candidate threshold, each scored independently.
std::pair<double, double> brute_f1_best(const std::vector<double>& scores,
                                        const std::vector<int>& labels);

}  // namespace fstest
