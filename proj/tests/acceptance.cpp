// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one check per criterion, one pass/fail line each.
// Usage: linmark_acceptance <fixture-corpus-dir> [criterion-number]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "linmark/baselines.hpp"
#include "linmark/chat.hpp"
#include "linmark/corpus.hpp"
#include "linmark/eval.hpp"
#include "linmark/markers.hpp"
#include "linmark/stats.hpp"
#include "linmark/synthetic.hpp"
#include "linmark/tiny_encoder.hpp"
#include "linmark/trainer.hpp"

using namespace linmark;
namespace fs = std::filesystem;

namespace {

struct Check {
  int number;
  std::string name;
  std::function<void()> run;
};

void require(bool condition, const std::string& what) {
  if (!condition) throw std::runtime_error(what);
}

std::string fixture_dir;  // set from argv

// ---- shared helpers --------------------------------------------------------

struct SmokeSetup {
  std::vector<LabeledUtterance> train;
  std::vector<LabeledUtterance> test;
  Tokenizer tokenizer;
  FormulationContext ctx;
  TinyEncoderConfig backend;
  TrainingConfig training;

  static SmokeSetup make() {
    SmokeSetup s{synthetic_labeled_set(50, 99), synthetic_labeled_set(100, 123),
                 Tokenizer::build({}, {}), {}, {}, {}};
    std::vector<std::string> texts;
    for (const auto& u : s.train) texts.push_back(u.text);
    for (const auto& u : s.test) texts.push_back(u.text);
    s.tokenizer = Tokenizer::build(
        texts, required_vocabulary_words(Verbalizer::default_words(),
                                         LabelDefinitions::defaults()));
    s.ctx.tokenizer = &s.tokenizer;
    s.ctx.verbalizer = Verbalizer::validated(Verbalizer::default_words(), s.tokenizer);
    s.ctx.definitions = LabelDefinitions::defaults();
    s.ctx.max_len = 160;
    s.backend.vocab_size = s.tokenizer.vocab_size();
    s.backend.max_seq_len = 160;
    s.backend.d_model = 32;
    s.backend.n_heads = 2;
    s.backend.n_layers = 2;
    s.backend.d_ffn = 64;
    s.backend.init_seed = 17;
    s.training.learning_rate = 5e-3;
    s.training.batch_size = 8;
    s.training.max_epochs = 50;
    s.training.early_stop_patience = 50;  // the criterion is the epoch budget
    s.training.repeats = 1;
    s.training.seed = 5;
    return s;
  }

  // trains one model under the strategy and returns (train acc, test acc)
  std::pair<double, double> train_and_score(Strategy strategy) const {
    StrategyRunner runner(strategy, ctx, train, training.seed);
    TinyEncoderConfig cfg = backend;
    TinyEncoder model(cfg);
    for (int phase = 0; phase < runner.phases(); ++phase) {
      const auto source = [&runner, phase](int epoch, std::mt19937_64& rng) {
        return runner.training_instances(phase, epoch, rng);
      };
      const auto val = runner.validation_instances(phase, train);
      fine_tune(model, source, val, runner.loss(phase), training, phase);
      if (phase + 1 < runner.phases()) model.reset_optimizer_state();
    }
    auto accuracy = [&](const std::vector<LabeledUtterance>& set) {
      int correct = 0;
      for (const auto& u : set) {
        if (runner.predict(model, u).predicted == u.label) ++correct;
      }
      return 100.0 * correct / static_cast<double>(set.size());
    };
    return {accuracy(train), accuracy(test)};
  }
};

// ---- criteria ----------------------------------------------------------------

// 1. macro reconstruction of the reported standard fine-tuning row
void criterion_macro_reconstruction() {
  const double values[] = {96.8, 20.8, 86.5, 56.5};
  const double macro = unweighted_macro(values);
  require(std::abs(macro - 65.1) <= 0.05 + 1e-12,
          "macro " + std::to_string(macro) + " not within 0.05 of 65.1");
}

// 2. squared-frequency law vs the reported row and a Monte-Carlo oracle
void criterion_random_rate() {
  const double n = 4037.0;
  const std::array<double, kNumLabels> freqs = {2245.0 / n, 212.0 / n, 980.0 / n,
                                                600.0 / n};
  const auto rates = random_rate(freqs);
  const double expected[] = {30.9, 0.3, 5.9, 2.2};
  const double reported[] = {30.8, 0.2, 5.7, 2.1};
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    require(std::abs(rates[c] - expected[c]) <= 0.05,
            "rate " + std::to_string(rates[c]) + " differs from expected");
    require(std::abs(rates[c] - reported[c]) <= 0.3,
            "rate " + std::to_string(rates[c]) + " not within 0.3pp of reported");
  }
  std::mt19937_64 rng(2024);
  std::discrete_distribution<int> draw(freqs.begin(), freqs.end());
  constexpr int kDraws = 1'000'000;
  std::array<double, kNumLabels> joint{};
  for (int i = 0; i < kDraws; ++i) {
    const int gold = draw(rng);
    if (draw(rng) == gold) joint[static_cast<std::size_t>(gold)] += 1.0;
  }
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    const double mc = 100.0 * joint[c] / kDraws;
    require(std::abs(rates[c] - mc) <= 0.3, "rate differs from Monte-Carlo oracle");
  }
}

// 3. golden structures for all seven encoders
void criterion_formulation_golden() {
  const std::vector<std::string> corpus = {"A mother is wiping a dish"};
  const Tokenizer tok = Tokenizer::build(
      corpus, required_vocabulary_words(Verbalizer::default_words(),
                                        LabelDefinitions::defaults()));
  FormulationContext ctx;
  ctx.tokenizer = &tok;
  ctx.verbalizer = Verbalizer::validated(Verbalizer::default_words(), tok);
  ctx.definitions = LabelDefinitions::defaults();
  ctx.max_len = 160;
  const std::string u = "A mother is wiping a dish";

  const auto standard = encode_standard(u, ctx);
  require(tok.render(standard.tokens) == "[CLS] a mother is wiping a dish [SEP]",
          "standard encoding structure");

  std::mt19937_64 rng(1);
  const auto mlm = mask_for_mlm(standard, 0.15, rng);
  require(mlm.mask_positions.size() ==
              static_cast<std::size_t>(std::ceil(0.15 * 6)),
          "mlm mask count != ceil(0.15 n)");

  const auto pairs = build_entailment_pairs(u, ctx);
  require(pairs.size() == 4, "entailment fan-out != 4");
  for (const auto& p : pairs) {
    require(std::count(p.tokens.begin(), p.tokens.end(), Tokenizer::kSep) == 2,
            "entailment pair must be [CLS] u [SEP] def [SEP]");
  }

  const auto prompt = build_prompt(u, ctx);
  require(std::count(prompt.tokens.begin(), prompt.tokens.end(), Tokenizer::kMask) == 1,
          "prompt must contain exactly one [MASK]");
  require(tok.render(prompt.tokens) ==
              "[CLS] a mother is wiping a dish . it is [MASK] . [SEP]",
          "prompt template structure");

  const std::array<std::string, kNumLabels> demos = {u, u, u, u};
  const auto demo = build_demonstration_input(u, demos, ctx);
  require(std::count(demo.tokens.begin(), demo.tokens.end(), Tokenizer::kMask) == 1,
          "demonstration input must contain exactly one [MASK]");
  require(std::count(demo.tokens.begin(), demo.tokens.end(), Tokenizer::kSep) == 5,
          "demonstration input must hold the query plus 4 demo segments");

  auto rng_inv = per_utterance_rng(u, 1);
  const auto inverse = build_inverse_input(u, DisorderLabel::anomia, ctx, rng_inv);
  require(inverse.mask_positions.size() ==
              static_cast<std::size_t>(std::ceil(0.5 * 6)),
          "inverse mask count != ceil(0.5 n)");
  require(std::count(inverse.tokens.begin(), inverse.tokens.end(),
                     ctx.verbalizer.token_id(DisorderLabel::anomia)) == 1,
          "inverse label slot must hold the candidate verbalizer token");

  // joint multitask reuses the standard encoding plus dynamic masks
  std::mt19937_64 rng_joint(2);
  const auto joint =
      mask_for_mlm(encode_standard(u, ctx, DisorderLabel::fluent), 0.15, rng_joint);
  require(joint.class_target.has_value() && !joint.token_targets.empty(),
          "joint instance needs both objectives");
}

// 4. gradient-path smoke over every trainable strategy
void criterion_gradient_smoke() {
  const SmokeSetup setup = SmokeSetup::make();
  const Strategy gated[] = {Strategy::standard_finetune,
                            Strategy::multitask_mlm_separate,
                            Strategy::multitask_mlm_joint,
                            Strategy::entailment,
                            Strategy::standard_prompt,
                            Strategy::prompt_demonstrations};
  for (Strategy s : gated) {
    const auto [train_acc, test_acc] = setup.train_and_score(s);
    std::printf("    %-24s train %.0f%% test %.0f%%\n",
                std::string(to_string(s)).c_str(), train_acc, test_acc);
    require(train_acc >= 95.0, std::string(to_string(s)) +
                                   " train accuracy below 95%: " +
                                   std::to_string(train_acc));
  }
  // the inverse objective has no label gradient; its gate is test accuracy
  // at least 20pp above weighted guessing on the separable set
  const auto [inv_train, inv_test] = setup.train_and_score(Strategy::prompt_inverse);
  std::printf("    %-24s train %.0f%% test %.0f%%\n", "prompt-inverse", inv_train,
              inv_test);
  std::array<double, kNumLabels> freqs{};
  for (const auto& u : setup.train) freqs[label_index(u.label)] += 1.0;
  for (auto& f : freqs) f /= static_cast<double>(setup.train.size());
  // overall expected accuracy of weighted guessing is sum of f_c^2
  double weighted_guess = 0.0;
  for (double f : freqs) weighted_guess += f * f;
  require(inv_test >= 100.0 * weighted_guess + 20.0,
          "inverse test accuracy below random rate + 20pp");
}

// 5. joint-loss arithmetic with the empirical weights
void criterion_joint_loss() {
  const double value = joint_loss(0.5139, 2.4149, LossSpec::joint());
  require(value == 2.0, "joint_loss(0.5139, 2.4149) != 2.0 exactly");
}

// 6. marker identities
void criterion_marker_identities() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    MarkerSeries s;
    s.kind = "communication";
    const int n = 2 + static_cast<int>(rng() % 7);
    for (int v = 1; v <= n; ++v) s.values.push_back(MarkerPoint{v, unit(rng)});
    const double expected =
        (s.values.back().value - s.values.front().value) / (n - 1);
    require(std::abs(delta_long(s) - expected) <= 1e-12, "telescoping identity");
  }
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::array<double, kNumLabels>> probs;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      std::array<double, kNumLabels> p{};
      double sum = 0.0;
      for (auto& v : p) {
        v = unit(rng) + 1e-3;
        sum += v;
      }
      for (auto& v : p) v /= sum;
      probs.push_back(p);
    }
    const double closure =
        session_marker_value(probs, MarkerKind::communication) +
        (session_marker_value(probs, MarkerKind::anomia) +
         session_marker_value(probs, MarkerKind::disfluency) +
         session_marker_value(probs, MarkerKind::agrammatism)) /
            100.0;
    require(std::abs(closure - 1.0) <= 1e-6, "probability closure");
  }
}

// 7. statistics oracles
void criterion_statistics_oracles() {
  // exhaustive rank-assignment enumeration for every pair with n_a + n_b <= 12
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.0, 1000.0);
  for (std::size_t na = 1; na <= 11; ++na) {
    for (std::size_t nb = 1; na + nb <= 12; ++nb) {
      if (std::min(na, nb) > 8) continue;  // exact path scope
      std::vector<double> a, b;
      for (std::size_t i = 0; i < na; ++i) a.push_back(unit(rng));
      for (std::size_t i = 0; i < nb; ++i) b.push_back(unit(rng));
      const TestResult r = mann_whitney(a, b);
      require(r.method == TestMethod::mann_whitney_exact, "expected exact path");

      // oracle: enumerate every subset of pooled positions for sample A
      std::vector<double> pooled(a);
      pooled.insert(pooled.end(), b.begin(), b.end());
      const std::size_t n = pooled.size();
      double at_or_below = 0.0, at_or_above = 0.0, total = 0.0;
      std::vector<std::size_t> comb(na);
      std::iota(comb.begin(), comb.end(), 0);
      auto u_of = [&]() {
        std::vector<bool> in_a(n, false);
        for (std::size_t i : comb) in_a[i] = true;
        double u = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (!in_a[i]) continue;
          for (std::size_t j = 0; j < n; ++j) {
            if (!in_a[j] && pooled[i] > pooled[j]) u += 1.0;
          }
        }
        return u;
      };
      const double observed = r.statistic;
      while (true) {
        const double u = u_of();
        total += 1.0;
        if (u <= observed) at_or_below += 1.0;
        if (u >= observed) at_or_above += 1.0;
        std::size_t i = na;
        bool done = true;
        while (i > 0) {
          --i;
          if (comb[i] != i + n - na) {
            done = false;
            break;
          }
        }
        if (done) break;
        ++comb[i];
        for (std::size_t j = i + 1; j < na; ++j) comb[j] = comb[j - 1] + 1;
      }
      const double oracle = std::min(1.0, 2.0 * std::min(at_or_below, at_or_above) /
                                              total);
      require(std::abs(r.p_value - oracle) <= 1e-12,
              "exact p differs from enumeration at n_a=" + std::to_string(na) +
                  " n_b=" + std::to_string(nb));
    }
  }

  // Pearson on y = a x + b returns sign(a) exactly
  std::vector<double> x;
  for (int i = 0; i < 25; ++i) x.push_back(0.3 * i + unit(rng) / 1000.0);
  for (double slope : {2.5, -0.7}) {
    std::vector<double> y;
    for (double v : x) y.push_back(slope * v + 4.2);
    const TestResult r = pearson(x, y);
    require(std::abs(r.statistic - (slope > 0 ? 1.0 : -1.0)) <= 1e-12,
            "pearson on a perfect line");
  }
}

// 8. qualitative cohort reproduction on the shipped synthetic corpus
void criterion_cohort_reproduction() {
  require(!fixture_dir.empty() && fs::is_directory(fixture_dir),
          "fixture corpus directory not found: " + fixture_dir);
  std::vector<SessionRecord> sessions;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(fixture_dir)) {
    if (entry.path().extension() == ".cha") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), "no .cha files in fixture corpus");
  for (const auto& file : files) {
    std::ifstream in(file);
    sessions.push_back(parse_chat_file(in, file.filename().string()));
  }
  const auto subjects = group_by_subject(std::move(sessions));
  const auto records = to_records(subjects);
  const DatasetSplit split = stratified_split(records, SplitRatios{}, 7);

  // train one tiny model and derive the communication marker per session
  std::vector<std::string> texts;
  for (const auto& r : split.train) texts.push_back(r.text);
  const Tokenizer tok = Tokenizer::build(
      texts, required_vocabulary_words(Verbalizer::default_words(),
                                       LabelDefinitions::defaults()));
  FormulationContext ctx;
  ctx.tokenizer = &tok;
  ctx.verbalizer = Verbalizer::validated(Verbalizer::default_words(), tok);
  ctx.definitions = LabelDefinitions::defaults();
  ctx.max_len = 160;
  TinyEncoderConfig backend;
  backend.vocab_size = tok.vocab_size();
  backend.max_seq_len = 160;
  backend.d_model = 32;
  backend.n_heads = 2;
  backend.n_layers = 2;
  backend.d_ffn = 64;
  TrainingConfig training;
  training.learning_rate = 5e-3;
  training.batch_size = 8;
  training.max_epochs = 50;
  training.early_stop_patience = 4;
  training.repeats = 1;
  training.seed = 3;
  auto trained = train_strategy(Strategy::standard_finetune, split, ctx,
                                fresh_model_factory(backend), training);
  const TinyEncoder& model = trained.front().model;
  StrategyRunner runner(Strategy::standard_finetune, ctx, to_labeled(split.train),
                        training.seed);

  std::map<Cohort, std::vector<double>> subject_means;
  std::vector<SubjectTrajectory> trajectories;
  for (const auto& subj : subjects) {
    MarkerSeries series;
    series.subject_id = subj.subject_id;
    series.cohort = subj.cohort;
    series.kind = "communication";
    SubjectTrajectory t;
    for (const auto& session : subj.sessions) {
      const double value =
          session_marker(model, runner, session, MarkerKind::communication);
      series.values.push_back(MarkerPoint{session.visit_index, value});
      t.behaviour.push_back(session.mmse ? std::optional<double>(*session.mmse)
                                         : std::nullopt);
    }
    double mean = 0.0;
    for (const auto& p : series.values) mean += p.value;
    subject_means[subj.cohort].push_back(mean /
                                         static_cast<double>(series.values.size()));
    t.marker = series;
    trajectories.push_back(std::move(t));
  }

  auto cohort_mean = [&](Cohort c) {
    const auto& v = subject_means.at(c);
    double total = 0.0;
    for (double x : v) total += x;
    return total / static_cast<double>(v.size());
  };
  const double healthy = cohort_mean(Cohort::healthy);
  const double mci = cohort_mean(Cohort::mci);
  const double ad = cohort_mean(Cohort::ad);
  std::printf("    communication marker means: healthy %.3f mci %.3f ad %.3f\n",
              healthy, mci, ad);
  require(healthy > mci && mci > ad, "cohort ordering healthy > MCI > AD");

  const TestResult separation =
      mann_whitney(subject_means.at(Cohort::healthy), subject_means.at(Cohort::ad));
  std::printf("    healthy vs AD Mann-Whitney p = %.3g\n", separation.p_value);
  require(separation.p_value < 0.05, "healthy vs AD separation not significant");

  const AssociationResult assoc =
      behaviour_association(trajectories, BehaviourMeasure::mmse);
  std::printf("    MMSE association r = %.3f (p = %.3g, n = %zu)\n",
              assoc.test.statistic, assoc.test.p_value, assoc.points.size());
  require(assoc.test.statistic > 0.4, "MMSE association r below 0.4");
}

// 9. parser conformance over the full annotation scheme
void criterion_parser_conformance() {
  struct Case {
    const char* raw;
    ChatCodeKind kind;
    std::optional<DisorderLabel> label;
  };
  const Case cases[] = {
      {"her doing the dishes . [+ gram]", ChatCodeKind::agrammatic,
       DisorderLabel::agrammatism},
      {"the [/] the boy climbs", ChatCodeKind::repetition, DisorderLabel::disfluency},
      {"his his sister's asking for one [//].", ChatCodeKind::revision,
       DisorderLabel::disfluency},
      {"Here's a &+sp water spigot here", ChatCodeKind::fragment,
       DisorderLabel::disfluency},
      {"he's gonna fall off of there . [+ es]", ChatCodeKind::empty_speech,
       DisorderLabel::anomia},
      {"if that little girl don't xxx +...", ChatCodeKind::trailing_off,
       DisorderLabel::anomia},
      {"the boy hasn't gotten down to his fall yet . [+ cir]",
       ChatCodeKind::circumlocution, DisorderLabel::anomia},
      {"and the thing keeps doing the thing . [+ jar]", ChatCodeKind::jargon,
       DisorderLabel::anomia},
      {"yeah that's it . [+ exc]", ChatCodeKind::excluded, std::nullopt},
  };
  for (const Case& c : cases) {
    std::istringstream in(std::string("*PAR:\t") + c.raw + "\n");
    const SessionRecord session = parse_chat_file(in, "t-1.cha");
    require(session.utterances.size() == 1, "one utterance expected");
    const AnnotatedUtterance& utt = session.utterances.front();
    require(utt.codes.size() == 1, std::string("code count for: ") + c.raw);
    require(utt.codes.front().kind == c.kind, std::string("code kind for: ") + c.raw);
    require(utt.label == c.label, std::string("label for: ") + c.raw);
    require(extract_codes(utt.text).empty(),
            std::string("cleaned text still has codes: ") + utt.text);
  }
  // the three example-table rows: anomia family, disfluency, agrammatism
  const std::pair<const char*, DisorderLabel> table_rows[] = {
      {"if that little girl don't xxx +...", DisorderLabel::anomia},
      {"his his sister's asking for one [//].", DisorderLabel::disfluency},
      {"her doing the dishes . [+ gram]", DisorderLabel::agrammatism},
  };
  for (const auto& [raw, label] : table_rows) {
    std::istringstream in(std::string("*PAR:\t") + raw + "\n");
    const SessionRecord session = parse_chat_file(in, "t-1.cha");
    require(session.utterances.front().label == label, "example-table row label");
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) fixture_dir = argv[1];
  int only = 0;
  if (argc > 2) only = std::atoi(argv[2]);

  const std::vector<Check> checks = {
      {1, "macro-metric reconstruction (65.15 ~ 65.1)", criterion_macro_reconstruction},
      {2, "random-rate squared-frequency law + Monte-Carlo oracle", criterion_random_rate},
      {3, "formulation golden structures", criterion_formulation_golden},
      {4, "gradient-path smoke across trainable strategies", criterion_gradient_smoke},
      {5, "joint-loss arithmetic with empirical weights", criterion_joint_loss},
      {6, "marker identities (telescoping + closure)", criterion_marker_identities},
      {7, "statistics oracles (exact U enumeration, Pearson lines)",
       criterion_statistics_oracles},
      {8, "qualitative cohort reproduction on the synthetic corpus",
       criterion_cohort_reproduction},
      {9, "parser conformance over the annotation scheme",
       criterion_parser_conformance},
  };

  int failures = 0;
  for (const auto& check : checks) {
    if (only != 0 && check.number != only) continue;
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      check.run();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (error.empty()) {
      std::printf("[PASS] criterion %d: %s (%.2fs)\n", check.number,
                  check.name.c_str(), seconds);
    } else {
      ++failures;
      std::printf("[FAIL] criterion %d: %s (%.2fs)\n       %s\n", check.number,
                  check.name.c_str(), seconds, error.c_str());
    }
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
