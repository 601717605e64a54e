// SPDX-License-Identifier: Apache-2.0

#include "linmark/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linmark/errors.hpp"

namespace linmark {

std::vector<LabeledUtterance> to_labeled(const std::vector<UtteranceRecord>& records) {
  std::vector<LabeledUtterance> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(LabeledUtterance{r.id, r.text, r.label});
  }
  return out;
}

double unweighted_macro(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

MetricsReport evaluate(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw ValidationError("evaluate: no predictions");
  MetricsReport report;
  for (const auto& p : predictions) {
    report.confusion[label_index(p.gold)][label_index(p.predicted)] += 1;
  }
  std::vector<double> acc_values;
  std::vector<double> f1_values;
  for (DisorderLabel label : kAllLabels) {
    const std::size_t c = label_index(label);
    std::size_t gold_count = 0;
    std::size_t predicted_count = 0;
    for (std::size_t other = 0; other < kNumLabels; ++other) {
      gold_count += report.confusion[c][other];
      predicted_count += report.confusion[other][c];
    }
    const std::size_t tp = report.confusion[c][c];
    if (gold_count == 0) {
      report.warnings.push_back("class '" + std::string(to_string(label)) +
                                "' absent from gold labels; excluded from macro");
      continue;
    }
    const double recall =
        static_cast<double>(tp) / static_cast<double>(gold_count);
    report.per_class_accuracy[c] = 100.0 * recall;
    acc_values.push_back(100.0 * recall);

    const double precision =
        predicted_count == 0
            ? 0.0
            : static_cast<double>(tp) / static_cast<double>(predicted_count);
    const double f1 = precision + recall == 0.0
                          ? 0.0
                          : 2.0 * precision * recall / (precision + recall);
    report.per_class_f1[c] = 100.0 * f1;
    f1_values.push_back(100.0 * f1);
  }
  report.macro_accuracy = unweighted_macro(acc_values);
  report.macro_f1 = unweighted_macro(f1_values);
  return report;
}

std::array<double, kNumLabels> random_rate(
    const std::array<double, kNumLabels>& class_frequencies) {
  double sum = 0.0;
  for (double f : class_frequencies) {
    if (f < 0.0) throw ValidationError("random_rate: negative frequency");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("random_rate: frequencies must sum to 1");
  }
  std::array<double, kNumLabels> out = {};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    out[c] = 100.0 * class_frequencies[c] * class_frequencies[c];
  }
  return out;
}

// ---- StrategyRunner -------------------------------------------------------

StrategyRunner::StrategyRunner(Strategy strategy, FormulationContext ctx,
                               std::vector<LabeledUtterance> train_pool,
                               std::uint64_t seed)
    : strategy_(strategy), ctx_(std::move(ctx)), train_pool_(std::move(train_pool)),
      seed_(seed) {
  if (train_pool_.empty()) {
    throw ValidationError("strategy runner needs a nonempty training pool");
  }
  demo_pool_.reserve(train_pool_.size());
  std::array<double, kNumLabels> counts = {};
  for (const auto& u : train_pool_) {
    demo_pool_.emplace_back(u.text, u.label);
    counts[label_index(u.label)] += 1.0;
  }
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    train_frequencies_[c] = counts[c] / static_cast<double>(train_pool_.size());
  }
}

int StrategyRunner::phases() const {
  return strategy_ == Strategy::multitask_mlm_separate ? 2 : 1;
}

LossSpec StrategyRunner::loss(int phase) const {
  switch (strategy_) {
    case Strategy::multitask_mlm_separate:
      return phase == 0 ? LossSpec::mlm() : LossSpec::classification();
    case Strategy::multitask_mlm_joint:
      return LossSpec::joint();
    case Strategy::prompt_inverse:
      return LossSpec::mlm();
    case Strategy::standard_prompt:
    case Strategy::prompt_demonstrations:
      return LossSpec::mlm();  // cloze objective over the vocabulary
    case Strategy::standard_finetune:
    case Strategy::entailment:
      return LossSpec::classification();
    case Strategy::random_rate:
      break;
  }
  throw TrainingError("random-rate has no training loss");
}

std::vector<FormulationInput> StrategyRunner::training_instances(
    int phase, int /*epoch*/, std::mt19937_64& rng) const {
  std::vector<FormulationInput> out;
  out.reserve(train_pool_.size());
  switch (strategy_) {
    case Strategy::standard_finetune:
      for (const auto& u : train_pool_) {
        out.push_back(encode_standard(u.text, ctx_, u.label));
      }
      break;
    case Strategy::multitask_mlm_separate:
      if (phase == 0) {
        for (const auto& u : train_pool_) {
          out.push_back(mask_for_mlm(encode_standard(u.text, ctx_), 0.15, rng));
        }
      } else {
        for (const auto& u : train_pool_) {
          out.push_back(encode_standard(u.text, ctx_, u.label));
        }
      }
      break;
    case Strategy::multitask_mlm_joint:
      for (const auto& u : train_pool_) {
        out.push_back(mask_for_mlm(encode_standard(u.text, ctx_, u.label), 0.15, rng));
      }
      break;
    case Strategy::entailment:
      for (const auto& u : train_pool_) {
        for (auto& pair : build_entailment_pairs(u.text, ctx_, u.label)) {
          out.push_back(std::move(pair));
        }
      }
      break;
    case Strategy::standard_prompt:
      for (const auto& u : train_pool_) {
        out.push_back(build_prompt(u.text, ctx_, u.label));
      }
      break;
    case Strategy::prompt_demonstrations:
      for (const auto& u : train_pool_) {
        const auto demos = sample_demonstrations(demo_pool_, rng);
        out.push_back(build_demonstration_input(u.text, demos, ctx_, u.label));
      }
      break;
    case Strategy::prompt_inverse:
      for (const auto& u : train_pool_) {
        out.push_back(build_inverse_input(u.text, u.label, ctx_, rng));
      }
      break;
    case Strategy::random_rate:
      throw TrainingError("random-rate has no training instances");
  }
  return out;
}

FormulationInput StrategyRunner::encode_for_validation(const LabeledUtterance& u,
                                                       int phase) const {
  switch (strategy_) {
    case Strategy::standard_finetune:
      return encode_standard(u.text, ctx_, u.label);
    case Strategy::multitask_mlm_separate:
      if (phase == 0) {
        auto rng = per_utterance_rng(u.text, seed_);
        return mask_for_mlm(encode_standard(u.text, ctx_), 0.15, rng);
      }
      return encode_standard(u.text, ctx_, u.label);
    case Strategy::multitask_mlm_joint: {
      auto rng = per_utterance_rng(u.text, seed_);
      return mask_for_mlm(encode_standard(u.text, ctx_, u.label), 0.15, rng);
    }
    case Strategy::standard_prompt:
      return build_prompt(u.text, ctx_, u.label);
    case Strategy::prompt_demonstrations: {
      auto rng = per_utterance_rng(u.text, seed_);
      const auto demos = sample_demonstrations(demo_pool_, rng);
      return build_demonstration_input(u.text, demos, ctx_, u.label);
    }
    case Strategy::prompt_inverse: {
      auto rng = per_utterance_rng(u.text, seed_);
      return build_inverse_input(u.text, u.label, ctx_, rng);
    }
    case Strategy::entailment:
    case Strategy::random_rate:
      break;
  }
  throw TrainingError("unsupported validation encoding");
}

std::vector<FormulationInput> StrategyRunner::validation_instances(
    int phase, const std::vector<LabeledUtterance>& utterances) const {
  std::vector<FormulationInput> out;
  if (strategy_ == Strategy::entailment) {
    for (const auto& u : utterances) {
      for (auto& pair : build_entailment_pairs(u.text, ctx_, u.label)) {
        out.push_back(std::move(pair));
      }
    }
    return out;
  }
  out.reserve(utterances.size());
  for (const auto& u : utterances) {
    out.push_back(encode_for_validation(u, phase));
  }
  return out;
}

std::array<double, kNumLabels> StrategyRunner::class_probabilities(
    const MaskedLmBackend& model, const std::string& text) const {
  std::array<double, kNumLabels> probs = {};
  switch (strategy_) {
    case Strategy::standard_finetune:
    case Strategy::multitask_mlm_separate:
    case Strategy::multitask_mlm_joint: {
      const auto input = encode_standard(text, ctx_);
      return model.classify(input.tokens);
    }
    case Strategy::entailment: {
      const auto pairs = build_entailment_pairs(text, ctx_);
      double sum = 0.0;
      for (DisorderLabel label : kAllLabels) {
        const auto pe = model.pair_classify(pairs[label_index(label)].tokens);
        probs[label_index(label)] = pe[static_cast<std::size_t>(PairLabel::entails)];
        sum += probs[label_index(label)];
      }
      for (double& p : probs) p /= sum;
      return probs;
    }
    case Strategy::standard_prompt:
    case Strategy::prompt_demonstrations: {
      FormulationInput input;
      if (strategy_ == Strategy::standard_prompt) {
        input = build_prompt(text, ctx_);
      } else {
        auto rng = per_utterance_rng(text, seed_);
        const auto demos = sample_demonstrations(demo_pool_, rng);
        input = build_demonstration_input(text, demos, ctx_);
      }
      const auto dists = model.fill_mask(input.tokens, input.mask_positions);
      const auto& dist = dists.front();
      double sum = 0.0;
      for (DisorderLabel label : kAllLabels) {
        const int id = ctx_.verbalizer.token_id(label);
        probs[label_index(label)] = dist[static_cast<std::size_t>(id)];
        sum += probs[label_index(label)];
      }
      for (double& p : probs) p /= sum;
      return probs;
    }
    case Strategy::prompt_inverse: {
      // candidate losses on identical mask positions; softmin over losses
      std::array<double, kNumLabels> losses = {};
      for (DisorderLabel label : kAllLabels) {
        auto rng = per_utterance_rng(text, seed_);
        const auto input = build_inverse_input(text, label, ctx_, rng);
        losses[label_index(label)] = model.instance_loss(input, LossSpec::mlm());
      }
      const double min_loss = *std::min_element(losses.begin(), losses.end());
      double sum = 0.0;
      for (std::size_t c = 0; c < kNumLabels; ++c) {
        probs[c] = std::exp(-(losses[c] - min_loss));
        sum += probs[c];
      }
      for (double& p : probs) p /= sum;
      return probs;
    }
    case Strategy::random_rate:
      return train_frequencies_;
  }
  throw ValidationError("unsupported strategy");
}

Prediction StrategyRunner::predict(const MaskedLmBackend& model,
                                   const LabeledUtterance& u) const {
  Prediction p;
  p.utterance_id = u.id;
  p.gold = u.label;
  p.class_probabilities = class_probabilities(model, u.text);
  if (strategy_ == Strategy::random_rate) {
    // weighted guess, deterministic per utterance and run seed
    auto rng = per_utterance_rng(u.id + u.text, seed_);
    std::discrete_distribution<int> pick(p.class_probabilities.begin(),
                                         p.class_probabilities.end());
    p.predicted = kAllLabels[static_cast<std::size_t>(pick(rng))];
  } else {
    const auto best =
        std::max_element(p.class_probabilities.begin(), p.class_probabilities.end());
    p.predicted = kAllLabels[static_cast<std::size_t>(
        std::distance(p.class_probabilities.begin(), best))];
  }
  return p;
}

// ---- experiments ----------------------------------------------------------

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ValidationError("average_reports: no reports");
  MetricsReport avg;
  const double n = static_cast<double>(reports.size());
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    double acc = 0.0, f1 = 0.0;
    std::size_t acc_n = 0, f1_n = 0;
    for (const auto& r : reports) {
      if (r.per_class_accuracy[c]) {
        acc += *r.per_class_accuracy[c];
        ++acc_n;
      }
      if (r.per_class_f1[c]) {
        f1 += *r.per_class_f1[c];
        ++f1_n;
      }
    }
    if (acc_n > 0) avg.per_class_accuracy[c] = acc / static_cast<double>(acc_n);
    if (f1_n > 0) avg.per_class_f1[c] = f1 / static_cast<double>(f1_n);
  }
  for (const auto& r : reports) {
    avg.macro_accuracy += r.macro_accuracy / n;
    avg.macro_f1 += r.macro_f1 / n;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
      for (std::size_t d = 0; d < kNumLabels; ++d) {
        avg.confusion[c][d] += r.confusion[c][d];
      }
    }
    avg.warnings.insert(avg.warnings.end(), r.warnings.begin(), r.warnings.end());
  }
  return avg;
}

ModelFactory fresh_model_factory(const TinyEncoderConfig& backend_cfg) {
  return [backend_cfg](std::uint64_t repeat_seed) {
    TinyEncoderConfig cfg = backend_cfg;
    cfg.init_seed = repeat_seed + 1;
    return TinyEncoder(cfg);
  };
}

std::vector<TrainedRepeat> train_strategy(Strategy strategy, const DatasetSplit& split,
                                          const FormulationContext& ctx,
                                          const ModelFactory& factory,
                                          const TrainingConfig& cfg) {
  cfg.validate();
  if (strategy == Strategy::random_rate) {
    throw ValidationError("random-rate needs no training; run evaluate directly");
  }
  if (split.train.empty()) {
    throw ValidationError("train_strategy needs a nonempty train split");
  }
  const auto train = to_labeled(split.train);
  const auto validation = to_labeled(split.validation);

  std::vector<TrainedRepeat> out;
  for (int k = 0; k < cfg.repeats; ++k) {
    const std::uint64_t repeat_seed = cfg.seed + static_cast<std::uint64_t>(k);
    StrategyRunner runner(strategy, ctx, train, repeat_seed);
    TrainedRepeat repeat{factory(repeat_seed), {}, repeat_seed};

    TrainingConfig repeat_cfg = cfg;
    repeat_cfg.seed = repeat_seed;
    for (int phase = 0; phase < runner.phases(); ++phase) {
      const auto source = [&runner, phase](int epoch, std::mt19937_64& rng) {
        return runner.training_instances(phase, epoch, rng);
      };
      const auto val_instances = runner.validation_instances(
          phase, validation.empty() ? train : validation);
      TrainingHistory phase_history = fine_tune(repeat.model, source, val_instances,
                                                runner.loss(phase), repeat_cfg, phase);
      if (phase == 0) {
        repeat.history = std::move(phase_history);
      } else {
        repeat.history.append_phase(phase_history);
      }
      // moments from the previous objective do not carry over
      if (phase + 1 < runner.phases()) repeat.model.reset_optimizer_state();
    }
    out.push_back(std::move(repeat));
  }
  return out;
}

ExperimentResult run_experiment(Strategy strategy, const DatasetSplit& split,
                                const FormulationContext& ctx,
                                const TinyEncoderConfig& backend_cfg,
                                const TrainingConfig& cfg) {
  cfg.validate();
  if (split.train.empty() || split.test.empty()) {
    throw ValidationError("run_experiment needs nonempty train and test splits");
  }
  const auto train = to_labeled(split.train);
  const auto test = to_labeled(split.test);

  ExperimentResult result;
  std::vector<MetricsReport> reports;

  if (strategy == Strategy::random_rate) {
    for (int k = 0; k < cfg.repeats; ++k) {
      const std::uint64_t repeat_seed = cfg.seed + static_cast<std::uint64_t>(k);
      StrategyRunner runner(strategy, ctx, train, repeat_seed);
      TinyEncoderConfig stub_cfg = backend_cfg;
      stub_cfg.init_seed = repeat_seed + 1;
      TinyEncoder stub(stub_cfg);  // never consulted by the random-rate rule
      RepeatResult repeat;
      for (const auto& u : test) repeat.predictions.push_back(runner.predict(stub, u));
      repeat.report = evaluate(repeat.predictions);
      reports.push_back(repeat.report);
      result.repeats.push_back(std::move(repeat));
    }
    result.averaged = average_reports(reports);
    return result;
  }

  std::vector<TrainedRepeat> trained =
      train_strategy(strategy, split, ctx, fresh_model_factory(backend_cfg), cfg);
  for (auto& t : trained) {
    StrategyRunner runner(strategy, ctx, train, t.seed);
    RepeatResult repeat;
    repeat.history = std::move(t.history);
    repeat.predictions.reserve(test.size());
    for (const auto& u : test) {
      repeat.predictions.push_back(runner.predict(t.model, u));
    }
    repeat.report = evaluate(repeat.predictions);
    reports.push_back(repeat.report);
    result.repeats.push_back(std::move(repeat));
    result.models.push_back(std::move(t.model));
  }
  result.averaged = average_reports(reports);
  return result;
}

}  // namespace linmark
