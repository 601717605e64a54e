// SPDX-License-Identifier: Apache-2.0
//
// Per-strategy training/inference orchestration and the evaluation metrics:
// per-class accuracy (within-class recall), per-class F1, and their
// unweighted macro averages.

#ifndef LINMARK_EVAL_HPP
#define LINMARK_EVAL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "linmark/corpus.hpp"
#include "linmark/model.hpp"
#include "linmark/tiny_encoder.hpp"
#include "linmark/trainer.hpp"

namespace linmark {

struct LabeledUtterance {
  std::string id;
  std::string text;
  DisorderLabel label = DisorderLabel::fluent;
};

std::vector<LabeledUtterance> to_labeled(const std::vector<UtteranceRecord>& records);

struct Prediction {
  std::string utterance_id;
  DisorderLabel gold = DisorderLabel::fluent;
  DisorderLabel predicted = DisorderLabel::fluent;
  std::array<double, kNumLabels> class_probabilities = {};
};

struct MetricsReport {
  // percentages; a class absent from gold has no defined metrics
  std::array<std::optional<double>, kNumLabels> per_class_accuracy;
  std::array<std::optional<double>, kNumLabels> per_class_f1;
  double macro_accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion = {};  // [gold][pred]
  std::vector<std::string> warnings;
};

/// The macro rule: unweighted mean.
double unweighted_macro(std::span<const double> values);

MetricsReport evaluate(const std::vector<Prediction>& predictions);

/// Expected per-class accuracy (percent) of frequency-weighted guessing:
/// the guess is class c with probability f_c and so is the gold label, so
/// the expected joint rate is f_c^2.
std::array<double, kNumLabels> random_rate(
    const std::array<double, kNumLabels>& class_frequencies);

/// Binds a strategy to its formulation context and training pool, and
/// provides both the per-epoch training instances and the per-strategy
/// prediction rule.
class StrategyRunner {
 public:
  StrategyRunner(Strategy strategy, FormulationContext ctx,
                 std::vector<LabeledUtterance> train_pool, std::uint64_t seed);

  Strategy strategy() const { return strategy_; }
  const FormulationContext& context() const { return ctx_; }

  /// mlm-separate trains in two phases (MLM first, then classification);
  /// everything else in one.
  int phases() const;
  LossSpec loss(int phase) const;
  bool trainable() const { return strategy_ != Strategy::random_rate; }

  std::vector<FormulationInput> training_instances(int phase, int epoch,
                                                   std::mt19937_64& rng) const;
  /// Deterministic encodings of a held-out set (fixed masks/demos).
  std::vector<FormulationInput> validation_instances(
      int phase, const std::vector<LabeledUtterance>& utterances) const;

  Prediction predict(const MaskedLmBackend& model, const LabeledUtterance& u) const;
  /// The class-probability part of predict, reusable for marker extraction.
  std::array<double, kNumLabels> class_probabilities(const MaskedLmBackend& model,
                                                     const std::string& text) const;

  const std::array<double, kNumLabels>& train_frequencies() const {
    return train_frequencies_;
  }

 private:
  FormulationInput encode_for_validation(const LabeledUtterance& u, int phase) const;

  Strategy strategy_;
  FormulationContext ctx_;
  std::vector<LabeledUtterance> train_pool_;
  std::vector<std::pair<std::string, DisorderLabel>> demo_pool_;
  std::array<double, kNumLabels> train_frequencies_ = {};
  std::uint64_t seed_ = 0;
};

struct RepeatResult {
  MetricsReport report;
  TrainingHistory history;
  std::vector<Prediction> predictions;
};

struct ExperimentResult {
  MetricsReport averaged;
  std::vector<RepeatResult> repeats;
  std::vector<TinyEncoder> models;  // one per repeat; empty for random-rate
};

/// Averages numeric metrics across repeats (confusions are summed).
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

/// Supplies the model for one repeat: a fresh initialization for the tiny
/// backend, a loaded checkpoint for a pre-trained one.
using ModelFactory = std::function<TinyEncoder(std::uint64_t repeat_seed)>;

ModelFactory fresh_model_factory(const TinyEncoderConfig& backend_cfg);

struct TrainedRepeat {
  TinyEncoder model;
  TrainingHistory history;
  std::uint64_t seed = 0;
};

/// Runs the strategy's fine-tuning phases for `cfg.repeats` repeats (seeds
/// seed+k). Validation falls back to the training pool when the split has no
/// validation part.
std::vector<TrainedRepeat> train_strategy(Strategy strategy, const DatasetSplit& split,
                                          const FormulationContext& ctx,
                                          const ModelFactory& factory,
                                          const TrainingConfig& cfg);

/// Trains `cfg.repeats` models, evaluates each on the test split, averages.
ExperimentResult run_experiment(Strategy strategy, const DatasetSplit& split,
                                const FormulationContext& ctx,
                                const TinyEncoderConfig& backend_cfg,
                                const TrainingConfig& cfg);

}  // namespace linmark

#endif  // LINMARK_EVAL_HPP
