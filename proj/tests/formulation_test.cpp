// SPDX-License-Identifier: Apache-2.0

#include "linmark/formulation.hpp"

#include <set>
#include <string>

#include "doctest.h"
#include "linmark/errors.hpp"
#include "linmark/tokenizer.hpp"

using namespace linmark;

namespace {

Tokenizer make_tokenizer() {
  const std::vector<std::string> corpus = {
      "A mother is wiping a dish",
      "Her doing the dishes",
      "His his sister's asking for one",
      "the boy climbs on the stool",
      "water overflows from the sink",
  };
  return Tokenizer::build(corpus,
                          required_vocabulary_words(Verbalizer::default_words(),
                                                    LabelDefinitions::defaults()));
}

struct Fixture {
  Tokenizer tokenizer = make_tokenizer();
  FormulationContext ctx;

  Fixture() {
    ctx.tokenizer = &tokenizer;
    ctx.verbalizer = Verbalizer::validated(Verbalizer::default_words(), tokenizer);
    ctx.definitions = LabelDefinitions::defaults();
    ctx.max_len = 128;
  }
};

int count_masks(const FormulationInput& input) {
  int n = 0;
  for (int id : input.tokens) {
    if (id == Tokenizer::kMask) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("encode_standard wraps the utterance in [CLS]/[SEP]") {
  Fixture f;
  const auto input = encode_standard("A mother is wiping a dish", f.ctx,
                                     DisorderLabel::fluent);
  CHECK(f.tokenizer.render(input.tokens) ==
        "[CLS] a mother is wiping a dish [SEP]");
  CHECK(input.class_target == 0);
  CHECK_FALSE(input.truncated);
}

TEST_CASE("encode_standard rejects empty input and truncates long input") {
  Fixture f;
  CHECK_THROWS_AS(encode_standard("", f.ctx), ValidationError);
  std::string lots;
  for (int i = 0; i < 600; ++i) lots += "dish ";
  f.ctx.max_len = 512;
  const auto input = encode_standard(lots, f.ctx);
  CHECK(input.tokens.size() == 512);
  CHECK(input.truncated);
}

TEST_CASE("mask_for_mlm masks ceil(rate * n) content tokens") {
  Fixture f;
  const auto base = encode_standard("A mother is wiping a dish", f.ctx);
  std::mt19937_64 rng(11);
  const auto masked = mask_for_mlm(base, 0.15, rng);
  // ceil(0.15 * 6) = 1
  REQUIRE(masked.mask_positions.size() == 1);
  CHECK(count_masks(masked) == 1);
  REQUIRE(masked.token_targets.size() == 1);
  const auto [pos, original] = masked.token_targets[0];
  CHECK(base.tokens[static_cast<std::size_t>(pos)] == original);
  // control markers never masked
  CHECK(pos >= 1);
  CHECK(pos <= 6);
}

TEST_CASE("mask_for_mlm is deterministic per seed and dynamic across draws") {
  Fixture f;
  const auto base =
      encode_standard("the boy climbs on the stool water overflows from the sink", f.ctx);
  std::mt19937_64 a(42);
  std::mt19937_64 b(42);
  CHECK(mask_for_mlm(base, 0.15, a).mask_positions ==
        mask_for_mlm(base, 0.15, b).mask_positions);

  std::mt19937_64 stream(3);
  std::set<std::vector<int>> seen;
  for (int i = 0; i < 20; ++i) {
    seen.insert(mask_for_mlm(base, 0.15, stream).mask_positions);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("mask_for_mlm rejects unmaskable input and bad rates") {
  Fixture f;
  FormulationInput controls_only;
  controls_only.tokens = {Tokenizer::kCls, Tokenizer::kSep};
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(mask_for_mlm(controls_only, 0.15, rng), ValidationError);
  const auto base = encode_standard("a dish", f.ctx);
  CHECK_THROWS_AS(mask_for_mlm(base, 0.0, rng), ValidationError);
  CHECK_THROWS_AS(mask_for_mlm(base, 1.0, rng), ValidationError);
}

TEST_CASE("entailment produces exactly four pairs with one entails target") {
  Fixture f;
  const auto pairs = build_entailment_pairs("His his sister's asking for one", f.ctx,
                                            DisorderLabel::disfluency);
  REQUIRE(pairs.size() == 4);
  int entails = 0;
  for (DisorderLabel label : kAllLabels) {
    const auto& p = pairs[label_index(label)];
    CHECK(p.candidate_label == label);
    REQUIRE(p.pair_target.has_value());
    if (*p.pair_target == static_cast<int>(PairLabel::entails)) ++entails;
  }
  CHECK(entails == 1);
  CHECK(*pairs[label_index(DisorderLabel::disfluency)].pair_target ==
        static_cast<int>(PairLabel::entails));
  CHECK(f.tokenizer.render(pairs[label_index(DisorderLabel::disfluency)].tokens) ==
        "[CLS] his his sister's asking for one [SEP] word repetition or revision "
        "[SEP]");
}

TEST_CASE("prompt template has exactly one mask targeting the verbalizer") {
  Fixture f;
  const auto input = build_prompt("Her doing the dishes", f.ctx,
                                  DisorderLabel::agrammatism);
  CHECK(f.tokenizer.render(input.tokens) ==
        "[CLS] her doing the dishes . it is [MASK] . [SEP]");
  REQUIRE(input.mask_positions.size() == 1);
  CHECK(count_masks(input) == 1);
  REQUIRE(input.token_targets.size() == 1);
  CHECK(input.token_targets[0].second ==
        f.ctx.verbalizer.token_id(DisorderLabel::agrammatism));
}

TEST_CASE("prompt strips a trailing terminator before templating") {
  Fixture f;
  const auto a = build_prompt("Her doing the dishes .", f.ctx);
  const auto b = build_prompt("Her doing the dishes", f.ctx);
  CHECK(a.tokens == b.tokens);
}

TEST_CASE("demonstration input holds one mask and resolved demo templates") {
  Fixture f;
  const std::array<std::string, kNumLabels> demos = {
      "water overflows from the sink",       // fluent
      "the boy climbs on the stool",         // anomia (content irrelevant here)
      "His his sister's asking for one",     // disfluency
      "Her doing the dishes",                // agrammatism
  };
  const auto input = build_demonstration_input("A mother is wiping a dish", demos,
                                               f.ctx, DisorderLabel::fluent);
  CHECK(count_masks(input) == 1);
  const std::string rendered = f.tokenizer.render(input.tokens);
  CHECK(rendered ==
        "[CLS] a mother is wiping a dish . it is [MASK] . [SEP] "
        "water overflows from the sink . it is fluent . [SEP] "
        "the boy climbs on the stool . it is empty . [SEP] "
        "his his sister's asking for one . it is repeated . [SEP] "
        "her doing the dishes . it is ungrammatical . [SEP]");
  REQUIRE(input.token_targets.size() == 1);
  CHECK(input.token_targets[0].second == f.ctx.verbalizer.token_id(DisorderLabel::fluent));
}

TEST_CASE("demonstration input drops trailing demos when over budget") {
  Fixture f;
  f.ctx.max_len = 30;
  const std::array<std::string, kNumLabels> demos = {
      "water overflows from the sink", "the boy climbs on the stool",
      "His his sister's asking for one", "Her doing the dishes"};
  const auto input = build_demonstration_input("A mother is wiping a dish", demos,
                                               f.ctx);
  CHECK(input.truncated);
  CHECK(input.tokens.size() <= 30);
  CHECK(count_masks(input) == 1);
}

TEST_CASE("missing demonstration class is an error") {
  Fixture f;
  std::array<std::string, kNumLabels> demos = {
      "water overflows from the sink", "", "His his sister's asking for one",
      "Her doing the dishes"};
  CHECK_THROWS_AS(build_demonstration_input("a dish", demos, f.ctx), ValidationError);
}

TEST_CASE("inverse input fills the slot and masks half the content") {
  Fixture f;
  auto rng_a = per_utterance_rng("A mother is wiping a dish", 5);
  const auto a = build_inverse_input("A mother is wiping a dish",
                                     DisorderLabel::fluent, f.ctx, rng_a);
  // ceil(0.5 * 6) = 3
  CHECK(a.mask_positions.size() == 3);
  CHECK(count_masks(a) == 3);

  auto rng_b = per_utterance_rng("A mother is wiping a dish", 5);
  const auto b = build_inverse_input("A mother is wiping a dish",
                                     DisorderLabel::anomia, f.ctx, rng_b);
  CHECK(a.mask_positions == b.mask_positions);
  // identical token sequences except the label slot
  REQUIRE(a.tokens.size() == b.tokens.size());
  int diffs = 0;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    if (a.tokens[i] != b.tokens[i]) ++diffs;
  }
  CHECK(diffs == 1);
  const int slot = static_cast<int>(a.tokens.size()) - 3;
  CHECK(a.tokens[static_cast<std::size_t>(slot)] ==
        f.ctx.verbalizer.token_id(DisorderLabel::fluent));
  CHECK(b.tokens[static_cast<std::size_t>(slot)] ==
        f.ctx.verbalizer.token_id(DisorderLabel::anomia));
}

TEST_CASE("mask-count law over a range of lengths") {
  Fixture f;
  std::string text = "dish";
  for (int n = 1; n <= 40; ++n) {
    CAPTURE(n);
    const auto base = encode_standard(text, f.ctx);
    std::mt19937_64 rng(7);
    const auto mlm = mask_for_mlm(base, 0.15, rng);
    CHECK(mlm.mask_positions.size() ==
          static_cast<std::size_t>(std::ceil(0.15 * n)));
    auto rng2 = per_utterance_rng(text, 1);
    const auto inv = build_inverse_input(text, DisorderLabel::fluent, f.ctx, rng2);
    CHECK(inv.mask_positions.size() ==
          static_cast<std::size_t>(std::ceil(0.5 * n)));
    text += " dish";
  }
}

TEST_CASE("verbalizer is a validated bijection") {
  Fixture f;
  for (DisorderLabel label : kAllLabels) {
    const int id = f.ctx.verbalizer.token_id(label);
    CHECK(f.ctx.verbalizer.label_of_token(id) == label);
  }
  CHECK_THROWS_AS(f.ctx.verbalizer.label_of_token(Tokenizer::kPad), ValidationError);

  std::array<std::string, kNumLabels> multi = Verbalizer::default_words();
  multi[0] = "not fluent";  // two tokens
  CHECK_THROWS_AS(Verbalizer::validated(multi, f.tokenizer), ConfigError);

  std::array<std::string, kNumLabels> unknown = Verbalizer::default_words();
  unknown[1] = "zyzzyva";
  CHECK_THROWS_AS(Verbalizer::validated(unknown, f.tokenizer), ConfigError);

  std::array<std::string, kNumLabels> clashing = Verbalizer::default_words();
  clashing[1] = clashing[0];
  CHECK_THROWS_AS(Verbalizer::validated(clashing, f.tokenizer), ConfigError);
}

TEST_CASE("demonstration sampling is seeded and total over classes") {
  std::vector<std::pair<std::string, DisorderLabel>> pool = {
      {"a", DisorderLabel::fluent},      {"b", DisorderLabel::fluent},
      {"c", DisorderLabel::anomia},      {"d", DisorderLabel::disfluency},
      {"e", DisorderLabel::disfluency},  {"f", DisorderLabel::agrammatism},
  };
  std::mt19937_64 r1(9);
  std::mt19937_64 r2(9);
  CHECK(sample_demonstrations(pool, r1) == sample_demonstrations(pool, r2));

  pool.erase(pool.begin() + 2);  // drop the only anomia example
  std::mt19937_64 r3(9);
  CHECK_THROWS_AS(sample_demonstrations(pool, r3), ValidationError);
}

TEST_CASE("strategy names round-trip") {
  for (Strategy s : kAllStrategies) {
    CHECK(strategy_from_string(to_string(s)) == s);
  }
  CHECK_THROWS_AS(strategy_from_string("upside-down"), ConfigError);
}
