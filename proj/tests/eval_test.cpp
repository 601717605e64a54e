// SPDX-License-Identifier: Apache-2.0

#include "linmark/eval.hpp"

#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "linmark/errors.hpp"
#include "linmark/synthetic.hpp"

using namespace linmark;

namespace {

Prediction make_prediction(DisorderLabel gold, DisorderLabel predicted) {
  Prediction p;
  p.gold = gold;
  p.predicted = predicted;
  p.class_probabilities[label_index(predicted)] = 1.0;
  return p;
}

/// Backend stub with scripted head outputs, for exercising the per-strategy
/// prediction rules without training anything.
class StubBackend : public MaskedLmBackend {
 public:
  int vocab_size() const override { return 64; }
  int max_sequence_length() const override { return 512; }

  std::array<double, kNumLabels> classify(const std::vector<int>&) const override {
    return class_probs;
  }

  std::vector<std::vector<double>> fill_mask(
      const std::vector<int>&, const std::vector<int>& positions) const override {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < positions.size(); ++i) out.push_back(mask_dist);
    return out;
  }

  std::array<double, 2> pair_classify(const std::vector<int>& tokens) const override {
    const auto it = pair_entails_by_len.find(tokens.size());
    const double e = it == pair_entails_by_len.end() ? 0.5 : it->second;
    std::array<double, 2> out{};
    out[static_cast<std::size_t>(PairLabel::entails)] = e;
    out[static_cast<std::size_t>(PairLabel::not_entails)] = 1.0 - e;
    return out;
  }

  double instance_loss(const FormulationInput& input, const LossSpec&) const override {
    REQUIRE(input.candidate_label.has_value());
    return losses_by_candidate[label_index(*input.candidate_label)];
  }

  std::array<double, kNumLabels> class_probs = {0.25, 0.25, 0.25, 0.25};
  std::vector<double> mask_dist = std::vector<double>(64, 1.0 / 64);
  std::map<std::size_t, double> pair_entails_by_len;
  std::array<double, kNumLabels> losses_by_candidate = {1.0, 1.0, 1.0, 1.0};
};

struct RunnerFixture {
  std::vector<LabeledUtterance> pool = synthetic_labeled_set(16, 42);
  Tokenizer tokenizer = make_tokenizer(pool);
  FormulationContext ctx;

  static Tokenizer make_tokenizer(const std::vector<LabeledUtterance>& pool) {
    std::vector<std::string> texts;
    for (const auto& u : pool) texts.push_back(u.text);
    return Tokenizer::build(texts,
                            required_vocabulary_words(Verbalizer::default_words(),
                                                      LabelDefinitions::defaults()));
  }

  RunnerFixture() {
    ctx.tokenizer = &tokenizer;
    ctx.verbalizer = Verbalizer::validated(Verbalizer::default_words(), tokenizer);
    ctx.definitions = LabelDefinitions::defaults();
    ctx.max_len = 160;
  }
};

}  // namespace

TEST_CASE("macro rule reconstructs the reported macro accuracy") {
  const double values[] = {96.8, 20.8, 86.5, 56.5};
  CHECK(unweighted_macro(values) == doctest::Approx(65.15).epsilon(1e-12));
}

TEST_CASE("evaluate matches a hand-computed confusion matrix") {
  using L = DisorderLabel;
  const std::vector<std::pair<L, L>> gold_pred = {
      {L::fluent, L::fluent},          {L::fluent, L::fluent},
      {L::fluent, L::disfluency},      {L::anomia, L::anomia},
      {L::anomia, L::fluent},          {L::disfluency, L::disfluency},
      {L::disfluency, L::disfluency},  {L::disfluency, L::agrammatism},
      {L::agrammatism, L::agrammatism}, {L::agrammatism, L::fluent},
  };
  std::vector<Prediction> predictions;
  for (const auto& [g, p] : gold_pred) predictions.push_back(make_prediction(g, p));
  const MetricsReport report = evaluate(predictions);

  CHECK(*report.per_class_accuracy[0] == doctest::Approx(100.0 * 2 / 3));
  CHECK(*report.per_class_accuracy[1] == doctest::Approx(50.0));
  CHECK(*report.per_class_accuracy[2] == doctest::Approx(100.0 * 2 / 3));
  CHECK(*report.per_class_accuracy[3] == doctest::Approx(50.0));
  // precision: fluent 2/4, anomia 1/1, disfluency 2/3, agrammatism 1/2
  CHECK(*report.per_class_f1[0] == doctest::Approx(100.0 * 2 * 0.5 * (2.0 / 3) /
                                                   (0.5 + 2.0 / 3)));
  CHECK(*report.per_class_f1[1] == doctest::Approx(100.0 * 2 * 1.0 * 0.5 / 1.5));
  CHECK(*report.per_class_f1[2] == doctest::Approx(100.0 * 2.0 / 3));
  CHECK(*report.per_class_f1[3] == doctest::Approx(50.0));
  CHECK(report.macro_accuracy ==
        doctest::Approx((100.0 * 2 / 3 + 50.0 + 100.0 * 2 / 3 + 50.0) / 4));
  CHECK(report.confusion[0][0] == 2);
  CHECK(report.confusion[0][2] == 1);
  CHECK(report.confusion[2][3] == 1);
}

TEST_CASE("evaluate: perfect classifier scores 100 everywhere") {
  std::vector<Prediction> predictions;
  for (DisorderLabel l : kAllLabels) {
    predictions.push_back(make_prediction(l, l));
    predictions.push_back(make_prediction(l, l));
  }
  const MetricsReport report = evaluate(predictions);
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    CHECK(*report.per_class_accuracy[c] == 100.0);
    CHECK(*report.per_class_f1[c] == 100.0);
  }
  CHECK(report.macro_accuracy == 100.0);
  CHECK(report.macro_f1 == 100.0);
}

TEST_CASE("evaluate: classes absent from gold are excluded with a warning") {
  std::vector<Prediction> predictions = {
      make_prediction(DisorderLabel::fluent, DisorderLabel::fluent),
      make_prediction(DisorderLabel::fluent, DisorderLabel::disfluency),
      make_prediction(DisorderLabel::anomia, DisorderLabel::anomia),
  };
  const MetricsReport report = evaluate(predictions);
  CHECK_FALSE(report.per_class_accuracy[label_index(DisorderLabel::disfluency)]);
  CHECK_FALSE(report.per_class_accuracy[label_index(DisorderLabel::agrammatism)]);
  CHECK(report.warnings.size() == 2);
  CHECK(report.macro_accuracy == doctest::Approx((50.0 + 100.0) / 2));
}

TEST_CASE("random_rate is the squared-frequency law") {
  const auto quarter = random_rate({0.5, 0.5, 0.0, 0.0});
  CHECK(quarter[0] == doctest::Approx(25.0));
  CHECK(quarter[1] == doctest::Approx(25.0));
  CHECK(quarter[2] == 0.0);
  const auto degenerate = random_rate({1.0, 0.0, 0.0, 0.0});
  CHECK(degenerate[0] == doctest::Approx(100.0));
  CHECK_THROWS_AS(random_rate({0.5, 0.5, 0.5, 0.0}), ValidationError);
}

TEST_CASE("random_rate reproduces the reported weighted-guessing row") {
  // merged class counts from the training-data overview
  const double n = 4037.0;
  const std::array<double, kNumLabels> freqs = {2245.0 / n, 212.0 / n, 980.0 / n,
                                                600.0 / n};
  const auto rates = random_rate(freqs);
  const double reported[] = {30.8, 0.2, 5.7, 2.1};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    CHECK(std::abs(rates[c] - reported[c]) <= 0.3);
  }

  // Monte-Carlo oracle: joint rate of (gold == c && guess == c) over weighted draws
  std::mt19937_64 rng(2024);
  std::discrete_distribution<int> draw(freqs.begin(), freqs.end());
  constexpr int kDraws = 1'000'000;
  std::array<double, kNumLabels> joint = {};
  for (int i = 0; i < kDraws; ++i) {
    const int gold = draw(rng);
    const int guess = draw(rng);
    if (gold == guess) joint[static_cast<std::size_t>(gold)] += 1.0;
  }
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    const double mc = 100.0 * joint[c] / kDraws;
    CHECK(std::abs(rates[c] - mc) <= 0.3);
  }
}

TEST_CASE("entailment prediction renormalizes the four entails probabilities") {
  RunnerFixture f;
  StrategyRunner runner(Strategy::entailment, f.ctx, f.pool, 1);
  StubBackend stub;
  // key the scripted p(entails) by encoded pair length
  const auto pairs = build_entailment_pairs("the mother washes the dish", f.ctx);
  const double entails[] = {0.9, 0.2, 0.1, 0.3};
  for (DisorderLabel l : kAllLabels) {
    stub.pair_entails_by_len[pairs[label_index(l)].tokens.size()] =
        entails[label_index(l)];
  }
  const LabeledUtterance u{"u1", "the mother washes the dish", DisorderLabel::fluent};
  const Prediction p = runner.predict(stub, u);
  CHECK(p.predicted == DisorderLabel::fluent);  // the first class wins
  const double sum = 0.9 + 0.2 + 0.1 + 0.3;
  CHECK(p.class_probabilities[0] == doctest::Approx(0.9 / sum));
  CHECK(p.class_probabilities[3] == doctest::Approx(0.3 / sum));
}

TEST_CASE("inverse prediction takes softmin over candidate losses") {
  RunnerFixture f;
  StrategyRunner runner(Strategy::prompt_inverse, f.ctx, f.pool, 1);
  StubBackend stub;
  stub.losses_by_candidate = {2.0, 1.1, 3.0, 2.5};
  const LabeledUtterance u{"u1", "the water overflows", DisorderLabel::anomia};
  const Prediction p = runner.predict(stub, u);
  CHECK(p.predicted == DisorderLabel::anomia);  // argmin loss
  // softmin: renormalized exp(-loss)
  double z = 0.0;
  for (double l : stub.losses_by_candidate) z += std::exp(-l);
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    CHECK(p.class_probabilities[c] ==
          doctest::Approx(std::exp(-stub.losses_by_candidate[c]) / z));
  }
}

TEST_CASE("prompt prediction restricts the mask distribution to the verbalizer") {
  RunnerFixture f;
  StrategyRunner runner(Strategy::standard_prompt, f.ctx, f.pool, 1);
  StubBackend stub;
  stub.mask_dist.assign(static_cast<std::size_t>(f.tokenizer.vocab_size()), 1e-4);
  const double masses[] = {0.02, 0.01, 0.03, 0.04};
  for (DisorderLabel l : kAllLabels) {
    stub.mask_dist[static_cast<std::size_t>(f.ctx.verbalizer.token_id(l))] =
        masses[label_index(l)];
  }
  const LabeledUtterance u{"u1", "the mother washes the dish", DisorderLabel::fluent};
  const Prediction p = runner.predict(stub, u);
  CHECK(p.predicted == DisorderLabel::agrammatism);
  CHECK(p.class_probabilities[0] == doctest::Approx(0.2));
  CHECK(p.class_probabilities[1] == doctest::Approx(0.1));
  CHECK(p.class_probabilities[2] == doctest::Approx(0.3));
  CHECK(p.class_probabilities[3] == doctest::Approx(0.4));
}

TEST_CASE("argmax consistency holds for probabilistic strategies") {
  RunnerFixture f;
  StubBackend stub;
  stub.class_probs = {0.1, 0.2, 0.65, 0.05};
  StrategyRunner runner(Strategy::standard_finetune, f.ctx, f.pool, 1);
  const LabeledUtterance u{"u1", "the boy takes a cookie", DisorderLabel::fluent};
  const Prediction p = runner.predict(stub, u);
  CHECK(p.predicted == DisorderLabel::disfluency);
  const auto best = std::max_element(p.class_probabilities.begin(),
                                     p.class_probabilities.end());
  CHECK(kAllLabels[static_cast<std::size_t>(
            std::distance(p.class_probabilities.begin(), best))] == p.predicted);
}

TEST_CASE("random-rate strategy guesses from training frequencies") {
  RunnerFixture f;
  StrategyRunner runner(Strategy::random_rate, f.ctx, f.pool, 7);
  StubBackend stub;
  const LabeledUtterance u{"u9", "the boy takes a cookie", DisorderLabel::fluent};
  const Prediction a = runner.predict(stub, u);
  const Prediction b = runner.predict(stub, u);
  CHECK(a.predicted == b.predicted);  // deterministic per (utterance, seed)
  CHECK(a.class_probabilities == runner.train_frequencies());
  CHECK_FALSE(runner.trainable());
}

TEST_CASE("average_reports averages macro metrics") {
  MetricsReport a;
  a.macro_f1 = 70.0;
  MetricsReport b;
  b.macro_f1 = 72.0;
  MetricsReport c;
  c.macro_f1 = 74.0;
  const auto avg = average_reports({a, b, c});
  CHECK(avg.macro_f1 == doctest::Approx(72.0));
  const auto single = average_reports({a});
  CHECK(single.macro_f1 == doctest::Approx(70.0));
}

TEST_CASE("run_experiment trains, evaluates, and averages repeats") {
  const auto data = synthetic_labeled_set(48, 77);
  std::vector<std::string> texts;
  for (const auto& u : data) texts.push_back(u.text);
  const Tokenizer tokenizer = Tokenizer::build(
      texts, required_vocabulary_words(Verbalizer::default_words(),
                                       LabelDefinitions::defaults()));
  FormulationContext ctx;
  ctx.tokenizer = &tokenizer;
  ctx.verbalizer = Verbalizer::validated(Verbalizer::default_words(), tokenizer);
  ctx.definitions = LabelDefinitions::defaults();
  ctx.max_len = 64;

  DatasetSplit split;
  for (std::size_t i = 0; i < data.size(); ++i) {
    UtteranceRecord r;
    r.id = data[i].id;
    r.text = data[i].text;
    r.label = data[i].label;
    if (i % 6 == 4) {
      split.validation.push_back(r);
    } else if (i % 6 == 5) {
      split.test.push_back(r);
    } else {
      split.train.push_back(r);
    }
  }

  TinyEncoderConfig backend;
  backend.vocab_size = tokenizer.vocab_size();
  backend.max_seq_len = 64;
  backend.d_model = 16;
  backend.n_heads = 2;
  backend.n_layers = 1;
  backend.d_ffn = 32;

  TrainingConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 8;
  cfg.max_epochs = 12;
  cfg.early_stop_patience = 12;
  cfg.repeats = 2;
  cfg.seed = 3;

  const auto result =
      run_experiment(Strategy::standard_finetune, split, ctx, backend, cfg);
  CHECK(result.repeats.size() == 2);
  CHECK(result.models.size() == 2);
  double mean_macro = 0.0;
  for (const auto& r : result.repeats) mean_macro += r.report.macro_accuracy / 2.0;
  CHECK(result.averaged.macro_accuracy == doctest::Approx(mean_macro));
  for (const auto& r : result.repeats) {
    CHECK(r.predictions.size() == split.test.size());
  }
}
