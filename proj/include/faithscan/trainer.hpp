#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "faithscan/adamw.hpp"
#include "faithscan/detector.hpp"
#include "faithscan/featureset.hpp"

namespace faithscan {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 40;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  AdamWConfig adamw() const {
    return {learning_rate, weight_decay, adam_beta1, adam_beta2, adam_epsilon};
  }
  bool operator==(const TrainConfig&) const = default;
};

void validate_train_config(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainHistory {
  std::vector<double> train_loss;  // one per completed epoch
  std::vector<double> val_auroc;
  std::size_t stopped_epoch = 0;   // 1-based
  std::size_t best_epoch = 0;      // 1-based

  bool operator==(const TrainHistory&) const = default;
};

nlohmann::json to_json(const TrainHistory& history);

// Probabilities are kept at least this far from 0 and 1 inside the loss.
inline constexpr double kLossClamp = 1e-12;

double weighted_bce(std::span<const double> p, std::span<const int> y, std::span<const double> w);

// A record converted once into detector inputs.
struct Example {
  std::vector<BranchInput> inputs;
  int label = 0;
  double weight = 1.0;
};

// Uses each record's weight when present, otherwise 1.
std::vector<Example> make_examples(const Dataset& dataset, const ModelSpec& spec);

double batch_loss(const Detector& model, std::span<const Example> batch);

// Weighted BCE of the batch and its gradient (overwrites `grads`). Throws
// non_finite naming the first offending parameter.
double batch_gradient(const Detector& model, std::span<const Example> batch,
                      std::span<double> grads);

// Tracks validation AUROC across 1-based epochs. An epoch improves only when
// strictly better than every earlier one.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);

  // Returns true when this epoch is the new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_seen() const { return epochs_; }
  double best_metric() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
};

struct TrainResult {
  Detector model;  // parameters of the best validation epoch
  TrainHistory history;
};

// Called after every epoch with (epoch, train loss, val auroc).
using EpochCallback = std::function<void(std::size_t, double, double)>;

// Without a validation set the training data is split 9:1 by config.seed.
TrainResult train(const Dataset& train_set, const std::optional<Dataset>& val_set,
                  const ModelSpec& spec, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
// derivative is ~0 from dividing rounding noise by nothing.
inline constexpr double kFiniteDiffFloor = 1e-6;
inline constexpr std::size_t kFiniteDiffMaxEntries = 10000;

// Generic central-difference check of `gradient` against `objective` at x.
// Above max_entries coordinates, a seeded random subset is checked.
FiniteDiffReport finite_diff_check(const std::function<double(std::span<const double>)>& objective,
                                   std::span<const double> gradient, std::span<const double> x,
                                   double step, std::uint64_t seed = 0,
                                   std::size_t max_entries = kFiniteDiffMaxEntries);

// Checks batch_gradient of `model` on `batch`. Parameters are restored on return.
FiniteDiffReport finite_diff_check(Detector& model, std::span<const Example> batch, double step,
                                   std::uint64_t seed = 0,
                                   std::size_t max_entries = kFiniteDiffMaxEntries);

}  // namespace faithscan
