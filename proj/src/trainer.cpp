// SPDX-License-Identifier: Apache-2.0

#include "linmark/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "linmark/errors.hpp"

namespace linmark {

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::adamw ? "adamw" : "adam";
}

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + std::string(s));
}

const std::vector<double>& TrainingConfig::learning_rate_pool() {
  static const std::vector<double> pool = {1e-5, 2e-5, 5e-5, 1e-4, 2e-4};
  return pool;
}

const std::vector<int>& TrainingConfig::batch_size_pool() {
  static const std::vector<int> pool = {16, 32, 64, 128};
  return pool;
}

void TrainingConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (grid_budget < 1) throw ConfigError("grid_budget must be >= 1");
  if (weight_decay < 0.0 || grad_clip < 0.0) {
    throw ConfigError("weight_decay and grad_clip must be nonnegative");
  }
}

void TrainingConfig::validate_pools() const {
  validate();
  const auto& lrs = learning_rate_pool();
  if (std::find(lrs.begin(), lrs.end(), learning_rate) == lrs.end()) {
    throw ConfigError("learning_rate is outside the protocol pool");
  }
  const auto& bss = batch_size_pool();
  if (std::find(bss.begin(), bss.end(), batch_size) == bss.end()) {
    throw ConfigError("batch_size is outside the protocol pool");
  }
}

void TrainingHistory::append_phase(const TrainingHistory& later) {
  epochs.insert(epochs.end(), later.epochs.begin(), later.epochs.end());
  best_epoch = later.best_epoch;
  best_validation_loss = later.best_validation_loss;
  early_stopped = later.early_stopped;
}

namespace {

OptimizerSettings optimizer_settings(const TrainingConfig& cfg) {
  OptimizerSettings opt;
  opt.kind = cfg.optimizer;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  opt.grad_clip = cfg.grad_clip;
  return opt;
}

double mean_validation_loss(const TinyEncoder& model,
                            const std::vector<FormulationInput>& validation,
                            const LossSpec& loss) {
  if (validation.empty()) {
    throw TrainingError("fine_tune requires a nonempty validation set");
  }
  double total = 0.0;
  for (const auto& input : validation) total += model.instance_loss(input, loss);
  return total / static_cast<double>(validation.size());
}

}  // namespace

TrainingHistory fine_tune(TinyEncoder& model, const InstanceSource& train_source,
                          const std::vector<FormulationInput>& validation,
                          const LossSpec& loss, const TrainingConfig& cfg, int phase) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const OptimizerSettings opt = optimizer_settings(cfg);

  TrainingHistory history;
  history.best_validation_loss = std::numeric_limits<double>::infinity();
  std::vector<float> best_weights = model.snapshot_weights();
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<FormulationInput> instances = train_source(epoch, rng);
    if (instances.empty()) throw TrainingError("instance source produced no data");
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double train_loss = 0.0;
    std::size_t consumed = 0;
    while (consumed < order.size()) {
      const std::size_t take = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), order.size() - consumed);
      std::vector<const FormulationInput*> batch;
      batch.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        batch.push_back(&instances[order[consumed + i]]);
      }
      consumed += take;
      train_loss += model.train_batch(batch, loss, opt) * static_cast<double>(take);
    }
    train_loss /= static_cast<double>(order.size());

    const double val_loss = mean_validation_loss(model, validation, loss);
    history.epochs.push_back(EpochRecord{phase, epoch, train_loss, val_loss});

    if (val_loss < history.best_validation_loss) {
      history.best_validation_loss = val_loss;
      history.best_epoch = epoch;
      best_weights = model.snapshot_weights();
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= cfg.early_stop_patience) {
        history.early_stopped = true;
        break;
      }
    }
  }
  model.restore_weights(best_weights);
  return history;
}

void write_history(std::ostream& out, const TrainingHistory& history) {
  for (const auto& e : history.epochs) {
    nlohmann::json j{{"phase", e.phase},
                     {"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"validation_loss", e.validation_loss}};
    out << j.dump() << '\n';
  }
}

std::vector<TrainingConfig> sample_grid(const TrainingConfig& base,
                                        std::uint64_t seed) {
  const auto& lrs = TrainingConfig::learning_rate_pool();
  const auto& bss = TrainingConfig::batch_size_pool();
  const OptimizerKind opts[] = {OptimizerKind::adamw, OptimizerKind::adam};

  std::vector<std::size_t> cells(lrs.size() * bss.size() * 2);
  std::iota(cells.begin(), cells.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(cells.begin(), cells.end(), rng);

  const std::size_t budget =
      std::min<std::size_t>(static_cast<std::size_t>(base.grid_budget), cells.size());
  std::vector<TrainingConfig> out;
  out.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t cell = cells[i];
    TrainingConfig cfg = base;
    cfg.learning_rate = lrs[cell % lrs.size()];
    cfg.batch_size = bss[(cell / lrs.size()) % bss.size()];
    cfg.optimizer = opts[cell / (lrs.size() * bss.size())];
    cfg.validate_pools();
    out.push_back(cfg);
  }
  return out;
}

GridOutcome grid_search(const std::function<TinyEncoder()>& make_model,
                        const InstanceSource& train_source,
                        const std::vector<FormulationInput>& validation,
                        const LossSpec& loss, const TrainingConfig& base) {
  GridOutcome outcome;
  double best = std::numeric_limits<double>::infinity();
  for (const TrainingConfig& cfg : sample_grid(base, base.seed)) {
    TinyEncoder model = make_model();
    const TrainingHistory history =
        fine_tune(model, train_source, validation, loss, cfg);
    outcome.candidates.push_back(GridCandidate{cfg, history.best_validation_loss});
    if (history.best_validation_loss < best) {
      best = history.best_validation_loss;
      outcome.best_index = outcome.candidates.size() - 1;
    }
  }
  if (outcome.candidates.empty()) throw TrainingError("empty grid");
  return outcome;
}

}  // namespace linmark
