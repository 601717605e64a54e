// SPDX-License-Identifier: Apache-2.0

#include "linmark/formulation.hpp"

#include <algorithm>
#include <cmath>

#include "linmark/errors.hpp"

namespace linmark {

namespace {

// FNV-1a, used only to derive per-utterance rng streams.
std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

bool is_terminal_punct(const std::string& tok) {
  return tok == "." || tok == "?" || tok == "!";
}

// Utterance tokens with any trailing terminator stripped; templates supply
// their own punctuation.
std::vector<int> template_base_tokens(std::string_view u, const Tokenizer& tok) {
  std::vector<std::string> pieces = Tokenizer::split(u);
  while (!pieces.empty() && is_terminal_punct(pieces.back())) pieces.pop_back();
  std::vector<int> ids;
  ids.reserve(pieces.size());
  for (const auto& piece : pieces) ids.push_back(tok.token_id(piece));
  return ids;
}

void require_nonempty(std::string_view u, const std::vector<int>& ids) {
  if (ids.empty()) {
    throw ValidationError("utterance has no tokens after cleaning: '" +
                          std::string(u) + "'");
  }
}

std::vector<int> sample_positions(std::vector<int> candidates, std::size_t count,
                                  std::mt19937_64& rng) {
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

// ". it is X ." with X either [MASK] or a resolved verbalizer token.
void append_template(std::vector<int>& tokens, const Tokenizer& tok, int slot_token) {
  tokens.push_back(tok.token_id("."));
  tokens.push_back(tok.token_id("it"));
  tokens.push_back(tok.token_id("is"));
  tokens.push_back(slot_token);
  tokens.push_back(tok.token_id("."));
}

constexpr std::size_t kTemplateLen = 5;  // ". it is X ."

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::standard_finetune:
      return "standard-finetune";
    case Strategy::multitask_mlm_separate:
      return "multitask-mlm-separate";
    case Strategy::multitask_mlm_joint:
      return "multitask-mlm-joint";
    case Strategy::entailment:
      return "entailment";
    case Strategy::standard_prompt:
      return "standard-prompt";
    case Strategy::prompt_demonstrations:
      return "prompt-demonstrations";
    case Strategy::prompt_inverse:
      return "prompt-inverse";
    case Strategy::random_rate:
      return "random-rate";
  }
  return "standard-finetune";
}

Strategy strategy_from_string(std::string_view s) {
  for (Strategy k : kAllStrategies) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown strategy: " + std::string(s));
}

std::array<std::string, kNumLabels> Verbalizer::default_words() {
  // indexed fluent, anomia, disfluency, agrammatism
  return {"fluent", "empty", "repeated", "ungrammatical"};
}

Verbalizer Verbalizer::validated(const std::array<std::string, kNumLabels>& words,
                                 const Tokenizer& tokenizer) {
  Verbalizer v;
  v.words_ = words;
  for (DisorderLabel label : kAllLabels) {
    const std::string& word = words[label_index(label)];
    const auto pieces = Tokenizer::split(word);
    if (pieces.size() != 1) {
      throw ConfigError("verbalizer word '" + word + "' tokenizes to " +
                        std::to_string(pieces.size()) + " tokens; need exactly 1");
    }
    if (!tokenizer.contains(pieces.front())) {
      throw ConfigError("verbalizer word '" + word + "' is not in the vocabulary");
    }
    v.ids_[label_index(label)] = tokenizer.token_id(pieces.front());
  }
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    for (std::size_t j = i + 1; j < kNumLabels; ++j) {
      if (v.ids_[i] == v.ids_[j]) {
        throw ConfigError("verbalizer mapping is not one-to-one: '" + words[i] +
                          "' and '" + words[j] + "' share a token");
      }
    }
  }
  return v;
}

DisorderLabel Verbalizer::label_of_token(int token_id) const {
  for (DisorderLabel label : kAllLabels) {
    if (ids_[label_index(label)] == token_id) return label;
  }
  throw ValidationError("token id " + std::to_string(token_id) +
                        " is not a verbalizer image");
}

LabelDefinitions LabelDefinitions::defaults() {
  LabelDefinitions d;
  d.text[label_index(DisorderLabel::fluent)] = "Fluent speech";
  d.text[label_index(DisorderLabel::anomia)] =
      "Talking around words/empty speech/incomplete speech";
  d.text[label_index(DisorderLabel::disfluency)] = "Word repetition or revision";
  d.text[label_index(DisorderLabel::agrammatism)] =
      "Agrammatism or paragrammatism in speech";
  return d;
}

std::vector<std::string> required_vocabulary_words(
    const std::array<std::string, kNumLabels>& verbalizer_words,
    const LabelDefinitions& defs) {
  std::vector<std::string> words(verbalizer_words.begin(), verbalizer_words.end());
  words.insert(words.end(), defs.text.begin(), defs.text.end());
  words.emplace_back("it is .");
  return words;
}

FormulationInput encode_standard(std::string_view u, const FormulationContext& ctx,
                                 std::optional<DisorderLabel> gold) {
  std::vector<int> content = ctx.tokenizer->encode(u);
  require_nonempty(u, content);
  FormulationInput input;
  const std::size_t budget = static_cast<std::size_t>(ctx.max_len) - 2;
  if (content.size() > budget) {
    content.resize(budget);
    input.truncated = true;
  }
  input.tokens.push_back(Tokenizer::kCls);
  input.tokens.insert(input.tokens.end(), content.begin(), content.end());
  input.tokens.push_back(Tokenizer::kSep);
  if (gold) input.class_target = static_cast<int>(label_index(*gold));
  return input;
}

FormulationInput mask_for_mlm(const FormulationInput& input, double rate,
                              std::mt19937_64& rng) {
  if (rate <= 0.0 || rate >= 1.0) {
    throw ValidationError("masking rate must lie in (0,1)");
  }
  std::vector<int> candidates;
  for (std::size_t i = 0; i < input.tokens.size(); ++i) {
    const int id = input.tokens[i];
    if (id != Tokenizer::kCls && id != Tokenizer::kSep && id != Tokenizer::kMask &&
        id != Tokenizer::kPad) {
      candidates.push_back(static_cast<int>(i));
    }
  }
  if (candidates.empty()) {
    throw ValidationError("no maskable tokens in input");
  }
  const auto count = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(candidates.size())));
  FormulationInput masked = input;
  masked.mask_positions = sample_positions(std::move(candidates), count, rng);
  masked.token_targets.clear();
  for (int pos : masked.mask_positions) {
    masked.token_targets.emplace_back(pos, masked.tokens[static_cast<std::size_t>(pos)]);
    masked.tokens[static_cast<std::size_t>(pos)] = Tokenizer::kMask;
  }
  return masked;
}

std::array<FormulationInput, kNumLabels> build_entailment_pairs(
    std::string_view u, const FormulationContext& ctx,
    std::optional<DisorderLabel> gold) {
  std::vector<int> content = ctx.tokenizer->encode(u);
  require_nonempty(u, content);
  std::array<FormulationInput, kNumLabels> pairs;
  for (DisorderLabel label : kAllLabels) {
    const std::vector<int> hypothesis =
        ctx.tokenizer->encode(ctx.definitions.of(label));
    FormulationInput& input = pairs[label_index(label)];
    // keep the hypothesis whole; trim the premise when over budget
    const std::size_t overhead = hypothesis.size() + 3;  // [CLS] + 2x[SEP]
    std::vector<int> premise = content;
    if (premise.size() + overhead > static_cast<std::size_t>(ctx.max_len)) {
      premise.resize(static_cast<std::size_t>(ctx.max_len) - overhead);
      input.truncated = true;
    }
    input.tokens.push_back(Tokenizer::kCls);
    input.tokens.insert(input.tokens.end(), premise.begin(), premise.end());
    input.tokens.push_back(Tokenizer::kSep);
    input.tokens.insert(input.tokens.end(), hypothesis.begin(), hypothesis.end());
    input.tokens.push_back(Tokenizer::kSep);
    input.candidate_label = label;
    if (gold) {
      input.pair_target = static_cast<int>(label == *gold ? PairLabel::entails
                                                          : PairLabel::not_entails);
    }
  }
  return pairs;
}

FormulationInput build_prompt(std::string_view u, const FormulationContext& ctx,
                              std::optional<DisorderLabel> gold) {
  std::vector<int> base = template_base_tokens(u, *ctx.tokenizer);
  require_nonempty(u, base);
  FormulationInput input;
  const std::size_t budget = static_cast<std::size_t>(ctx.max_len) - 2 - kTemplateLen;
  if (base.size() > budget) {
    base.resize(budget);
    input.truncated = true;
  }
  input.tokens.push_back(Tokenizer::kCls);
  input.tokens.insert(input.tokens.end(), base.begin(), base.end());
  append_template(input.tokens, *ctx.tokenizer, Tokenizer::kMask);
  input.tokens.push_back(Tokenizer::kSep);
  const int mask_pos = static_cast<int>(input.tokens.size()) - 3;
  input.mask_positions.push_back(mask_pos);
  if (gold) {
    input.token_targets.emplace_back(mask_pos, ctx.verbalizer.token_id(*gold));
  }
  return input;
}

FormulationInput build_demonstration_input(
    std::string_view u, const std::array<std::string, kNumLabels>& demos,
    const FormulationContext& ctx, std::optional<DisorderLabel> gold) {
  for (DisorderLabel label : kAllLabels) {
    if (demos[label_index(label)].empty()) {
      throw ValidationError("missing demonstration for class '" +
                            std::string(to_string(label)) + "'");
    }
  }
  FormulationInput input = build_prompt(u, ctx, gold);
  input.tokens.pop_back();  // the query's [SEP] is re-appended below

  std::vector<std::vector<int>> segments;
  for (DisorderLabel label : kAllLabels) {
    std::vector<int> segment = template_base_tokens(demos[label_index(label)],
                                                    *ctx.tokenizer);
    require_nonempty(demos[label_index(label)], segment);
    append_template(segment, *ctx.tokenizer, ctx.verbalizer.token_id(label));
    segment.push_back(Tokenizer::kSep);
    segments.push_back(std::move(segment));
  }

  std::size_t total = input.tokens.size() + 1;  // + query [SEP]
  for (const auto& s : segments) total += s.size();
  while (!segments.empty() && total > static_cast<std::size_t>(ctx.max_len)) {
    total -= segments.back().size();
    segments.pop_back();
    input.truncated = true;
  }
  input.tokens.push_back(Tokenizer::kSep);
  for (const auto& s : segments) {
    input.tokens.insert(input.tokens.end(), s.begin(), s.end());
  }
  return input;
}

FormulationInput build_inverse_input(std::string_view u, DisorderLabel candidate,
                                     const FormulationContext& ctx,
                                     std::mt19937_64& rng) {
  std::vector<int> base = template_base_tokens(u, *ctx.tokenizer);
  require_nonempty(u, base);
  FormulationInput input;
  const std::size_t budget = static_cast<std::size_t>(ctx.max_len) - 2 - kTemplateLen;
  if (base.size() > budget) {
    base.resize(budget);
    input.truncated = true;
  }
  input.tokens.push_back(Tokenizer::kCls);
  input.tokens.insert(input.tokens.end(), base.begin(), base.end());
  append_template(input.tokens, *ctx.tokenizer, ctx.verbalizer.token_id(candidate));
  input.tokens.push_back(Tokenizer::kSep);
  input.candidate_label = candidate;

  std::vector<int> candidates(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) candidates[i] = static_cast<int>(i + 1);
  const auto count = static_cast<std::size_t>(
      std::ceil(0.5 * static_cast<double>(base.size())));
  input.mask_positions = sample_positions(std::move(candidates), count, rng);
  for (int pos : input.mask_positions) {
    input.token_targets.emplace_back(pos, input.tokens[static_cast<std::size_t>(pos)]);
    input.tokens[static_cast<std::size_t>(pos)] = Tokenizer::kMask;
  }
  return input;
}

std::mt19937_64 per_utterance_rng(std::string_view u, std::uint64_t run_seed) {
  return std::mt19937_64(fnv1a(u) ^ (run_seed * 0x9e3779b97f4a7c15ULL));
}

std::array<std::string, kNumLabels> sample_demonstrations(
    const std::vector<std::pair<std::string, DisorderLabel>>& pool,
    std::mt19937_64& rng) {
  std::array<std::vector<const std::string*>, kNumLabels> by_class;
  for (const auto& [text, label] : pool) {
    by_class[label_index(label)].push_back(&text);
  }
  std::array<std::string, kNumLabels> demos;
  for (DisorderLabel label : kAllLabels) {
    const auto& bucket = by_class[label_index(label)];
    if (bucket.empty()) {
      throw ValidationError("demonstration pool has no instance of class '" +
                            std::string(to_string(label)) + "'");
    }
    std::uniform_int_distribution<std::size_t> pick(0, bucket.size() - 1);
    demos[label_index(label)] = *bucket[pick(rng)];
  }
  return demos;
}

}  // namespace linmark
