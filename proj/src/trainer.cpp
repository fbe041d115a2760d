#include "faithscan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "faithscan/error.hpp"
#include "faithscan/metrics.hpp"

namespace faithscan {

void validate_train_config(const TrainConfig& c) {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(c.learning_rate)) fail(ErrorKind::config, "learning_rate must be positive");
  if (!(c.weight_decay >= 0.0 && std::isfinite(c.weight_decay))) {
    fail(ErrorKind::config, "weight_decay must be non-negative");
  }
  if (c.batch_size == 0) fail(ErrorKind::config, "batch_size must be positive");
  if (c.max_epochs == 0) fail(ErrorKind::config, "max_epochs must be positive");
  if (c.patience == 0) fail(ErrorKind::config, "patience must be positive");
  if (c.patience > c.max_epochs) fail(ErrorKind::config, "patience must not exceed max_epochs");
  if (!(c.adam_beta1 > 0.0 && c.adam_beta1 < 1.0)) fail(ErrorKind::config, "adam_beta1 must lie in (0, 1)");
  if (!(c.adam_beta2 > 0.0 && c.adam_beta2 < 1.0)) fail(ErrorKind::config, "adam_beta2 must lie in (0, 1)");
  if (!positive(c.adam_epsilon)) fail(ErrorKind::config, "adam_epsilon must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
          {"patience", c.patience},           {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::config, "training config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
      else fail(ErrorKind::config, fmt::format("unknown training key '{}'", key));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, fmt::format("bad training config: {}", e.what()));
  }
  validate_train_config(c);
  return c;
}

nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    epochs.push_back({{"epoch", e + 1}, {"train_loss", h.train_loss[e]}, {"val_auroc", h.val_auroc[e]}});
  }
  return {{"epochs", epochs}, {"stopped_epoch", h.stopped_epoch}, {"best_epoch", h.best_epoch}};
}

namespace {

double clamp_probability(double p) {
  if (p < kLossClamp || p > 1.0 - kLossClamp) {
    spdlog::debug("probability {} clamped inside the loss", p);
    return std::clamp(p, kLossClamp, 1.0 - kLossClamp);
  }
  return p;
}

double sample_loss(double p, int y) {
  p = clamp_probability(p);
  return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

double weighted_bce(std::span<const double> p, std::span<const int> y, std::span<const double> w) {
  if (p.size() != y.size() || p.size() != w.size()) {
    fail(ErrorKind::shape_mismatch, "weighted_bce needs equally long p, y and w");
  }
  if (p.empty()) fail(ErrorKind::invalid_argument, "weighted_bce needs at least one sample");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      fail(ErrorKind::invalid_argument, fmt::format("probability {} outside [0, 1]", p[i]));
    }
    if (y[i] != 0 && y[i] != 1) fail(ErrorKind::invalid_argument, "labels must be 0 or 1");
    if (!(w[i] >= 0.0 && std::isfinite(w[i]))) {
      fail(ErrorKind::invalid_argument, fmt::format("weight {} must be non-negative", w[i]));
    }
    total += w[i] * sample_loss(p[i], y[i]);
  }
  return total / static_cast<double>(p.size());
}

std::vector<Example> make_examples(const Dataset& dataset, const ModelSpec& spec) {
  std::vector<Example> out;
  out.reserve(dataset.records.size());
  for (const auto& r : dataset.records) {
    if (!r.label) fail(ErrorKind::invalid_argument, fmt::format("record '{}' is unlabeled", r.id));
    out.push_back({make_inputs(r, spec), *r.label, r.weight.value_or(1.0)});
  }
  return out;
}

double batch_loss(const Detector& model, std::span<const Example> batch) {
  std::vector<double> p, w;
  std::vector<int> y;
  for (const auto& ex : batch) {
    p.push_back(model.predict(ex.inputs));
    y.push_back(ex.label);
    w.push_back(ex.weight);
  }
  return weighted_bce(p, y, w);
}

double batch_gradient(const Detector& model, std::span<const Example> batch,
                      std::span<double> grads) {
  if (batch.empty()) fail(ErrorKind::invalid_argument, "cannot differentiate an empty batch");
  std::fill(grads.begin(), grads.end(), 0.0);
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    if (!(ex.weight >= 0.0)) fail(ErrorKind::invalid_argument, "sample weights must be non-negative");
    const ForwardTrace tr = model.forward(ex.inputs);
    total += ex.weight * sample_loss(tr.prob, ex.label);
    const double dlogit = ex.weight * (tr.prob - static_cast<double>(ex.label)) / n;
    model.backward(tr, ex.inputs, dlogit, grads);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      fail(ErrorKind::non_finite,
           fmt::format("non-finite gradient in parameter '{}'", model.params().owner_of(i)));
    }
  }
  return total / n;
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience == 0) fail(ErrorKind::invalid_argument, "patience must be positive");
}

bool EarlyStopper::update(double metric) {
  ++epochs_;
  if (best_epoch_ == 0 || metric > best_) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

TrainResult train(const Dataset& train_set, const std::optional<Dataset>& val_set,
                  const ModelSpec& spec, const TrainConfig& config, const EpochCallback& on_epoch) {
  validate_train_config(config);
  validate_model_spec(spec);

  Dataset train_part;
  Dataset val_part;
  if (val_set) {
    train_part = train_set;
    val_part = *val_set;
  } else {
    std::tie(train_part, val_part) = split_dataset(train_set, 0.9, config.seed);
  }
  if (train_part.records.empty()) fail(ErrorKind::invalid_argument, "training set is empty");

  const std::vector<Example> train_examples = make_examples(train_part, spec);
  const std::vector<Example> val_examples = make_examples(val_part, spec);
  std::vector<int> val_labels;
  for (const auto& ex : val_examples) val_labels.push_back(ex.label);
  const auto n_pos = std::count(val_labels.begin(), val_labels.end(), 1);
  if (n_pos == 0 || n_pos == static_cast<std::ptrdiff_t>(val_labels.size())) {
    fail(ErrorKind::single_class, "validation set must contain both classes for AUROC");
  }

  Detector model = Detector::initialized(spec, config.seed);
  Detector best = model;
  const std::size_t n_params = model.params().size();
  std::vector<double> grads(n_params, 0.0);
  AdamWState state(n_params);
  const AdamWConfig adamw = config.adamw();

  std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  EarlyStopper stopper(config.patience);
  std::vector<Example> batch;
  std::vector<double> val_probs(val_examples.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_examples[order[i]]);
      const double loss = batch_gradient(model, batch, grads);
      weighted_sum += loss * static_cast<double>(batch.size());
      adamw_step(model.params().values(), grads, state, adamw);
    }
    const double train_loss = weighted_sum / static_cast<double>(order.size());

    for (std::size_t i = 0; i < val_examples.size(); ++i) {
      val_probs[i] = model.predict(val_examples[i].inputs);
    }
    const double val_auc = auroc(val_probs, val_labels);
    history.train_loss.push_back(train_loss);
    history.val_auroc.push_back(val_auc);
    if (stopper.update(val_auc)) best = model;
    spdlog::info("epoch {}: train loss {:.6f}, val AUROC {:.6f}", epoch, train_loss, val_auc);
    if (on_epoch) on_epoch(epoch, train_loss, val_auc);
    history.stopped_epoch = epoch;
    if (stopper.should_stop()) break;
  }
  history.best_epoch = stopper.best_epoch();
  return {std::move(best), std::move(history)};
}

FiniteDiffReport finite_diff_check(const std::function<double(std::span<const double>)>& objective,
                                   std::span<const double> gradient, std::span<const double> x,
                                   double step, std::uint64_t seed, std::size_t max_entries) {
  if (!(step > 0.0 && std::isfinite(step))) {
    fail(ErrorKind::invalid_argument, "finite-difference step must be positive");
  }
  if (gradient.size() != x.size()) {
    fail(ErrorKind::shape_mismatch, "gradient and point differ in length");
  }
  std::vector<std::size_t> indices(x.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (indices.size() > max_entries) {
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(max_entries);
    std::sort(indices.begin(), indices.end());
  }

  std::vector<double> probe(x.begin(), x.end());
  FiniteDiffReport report;
  for (std::size_t i : indices) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = objective(probe);
    probe[i] = orig - step;
    const double down = objective(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = gradient[i];
    const double scale = std::max({std::abs(analytic), std::abs(numeric), kFiniteDiffFloor});
    const double rel = std::abs(analytic - numeric) / scale;
    if (!(rel <= report.max_rel_error)) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    ++report.checked;
  }
  return report;
}

FiniteDiffReport finite_diff_check(Detector& model, std::span<const Example> batch, double step,
                                   std::uint64_t seed, std::size_t max_entries) {
  std::vector<double> grads(model.params().size(), 0.0);
  batch_gradient(model, batch, grads);
  const std::vector<double> saved = model.params().values();
  auto objective = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), model.params().values().begin());
    return batch_loss(model, batch);
  };
  FiniteDiffReport report;
  try {
    report = finite_diff_check(objective, grads, saved, step, seed, max_entries);
  } catch (...) {
    model.params().values() = saved;
    throw;
  }
  model.params().values() = saved;
  return report;
}

}  // namespace faithscan
