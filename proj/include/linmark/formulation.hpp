// SPDX-License-Identifier: Apache-2.0
//
// Strategy-specific encoders that turn a cleaned utterance into model inputs
// and targets: plain classification, masked-LM variants, entailment pairs,
// and the cloze-style prompt templates.

#ifndef LINMARK_FORMULATION_HPP
#define LINMARK_FORMULATION_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linmark/labels.hpp"
#include "linmark/tokenizer.hpp"

namespace linmark {

enum class Strategy {
  standard_finetune,
  multitask_mlm_separate,
  multitask_mlm_joint,
  entailment,
  standard_prompt,
  prompt_demonstrations,
  prompt_inverse,
  random_rate,
};

inline constexpr std::array<Strategy, 8> kAllStrategies = {
    Strategy::standard_finetune, Strategy::multitask_mlm_separate,
    Strategy::multitask_mlm_joint, Strategy::entailment,
    Strategy::standard_prompt,    Strategy::prompt_demonstrations,
    Strategy::prompt_inverse,     Strategy::random_rate};

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

/// Pair-classification label space for the entailment formulation.
enum class PairLabel { not_entails = 0, entails = 1 };

/// One encoded training/inference instance.
struct FormulationInput {
  std::vector<int> tokens;  // token ids incl. [CLS]/[SEP]/[MASK]
  std::vector<int> mask_positions;
  std::vector<std::pair<int, int>> token_targets;  // (position, original id)
  std::optional<int> class_target;                 // 0..3
  std::optional<int> pair_target;                  // PairLabel
  std::optional<DisorderLabel> candidate_label;
  bool truncated = false;

  bool has_training_target() const {
    return class_target.has_value() || pair_target.has_value() ||
           !token_targets.empty();
  }
};

/// One-to-one mapping from labels to single vocabulary words. Every image
/// must tokenize to exactly one known token; validated at construction.
class Verbalizer {
 public:
  static std::array<std::string, kNumLabels> default_words();
  static Verbalizer validated(const std::array<std::string, kNumLabels>& words,
                              const Tokenizer& tokenizer);

  int token_id(DisorderLabel label) const { return ids_[label_index(label)]; }
  const std::string& word(DisorderLabel label) const {
    return words_[label_index(label)];
  }
  /// Inverse mapping; throws for ids outside the image set.
  DisorderLabel label_of_token(int token_id) const;
  const std::array<int, kNumLabels>& image_ids() const { return ids_; }

 private:
  std::array<std::string, kNumLabels> words_;
  std::array<int, kNumLabels> ids_ = {};
};

/// Natural-language class definitions used as entailment hypotheses.
struct LabelDefinitions {
  std::array<std::string, kNumLabels> text;
  static LabelDefinitions defaults();
  const std::string& of(DisorderLabel label) const { return text[label_index(label)]; }
};

/// Everything the encoders need: tokenizer binding, verbalizer, definitions,
/// and the backend's sequence budget.
struct FormulationContext {
  const Tokenizer* tokenizer = nullptr;
  Verbalizer verbalizer;
  LabelDefinitions definitions;
  int max_len = 128;
};

/// Words that must be present in any vocabulary used with these encoders.
std::vector<std::string> required_vocabulary_words(
    const std::array<std::string, kNumLabels>& verbalizer_words,
    const LabelDefinitions& defs);

/// [CLS] u [SEP] with a class target. Throws on empty input; truncates from
/// the right when over the budget.
FormulationInput encode_standard(std::string_view u, const FormulationContext& ctx,
                                 std::optional<DisorderLabel> gold = std::nullopt);

/// Replaces ceil(rate * non-control tokens) positions with [MASK], recording
/// the originals as targets. Fresh rng state gives fresh positions.
FormulationInput mask_for_mlm(const FormulationInput& input, double rate,
                              std::mt19937_64& rng);

/// One pair [CLS] u [SEP] definition [SEP] per class, in canonical label
/// order. With a gold label the matching pair is targeted `entails` and the
/// rest `not_entails`.
std::array<FormulationInput, kNumLabels> build_entailment_pairs(
    std::string_view u, const FormulationContext& ctx,
    std::optional<DisorderLabel> gold = std::nullopt);

/// [CLS] u . it is [MASK] . [SEP]; the single mask is targeted with the gold
/// label's verbalizer token.
FormulationInput build_prompt(std::string_view u, const FormulationContext& ctx,
                              std::optional<DisorderLabel> gold = std::nullopt);

/// Query template followed by one resolved demonstration template per class
/// (canonical order); exactly one [MASK] remains, in the query. Over-length
/// inputs drop trailing demonstrations first.
FormulationInput build_demonstration_input(
    std::string_view u, const std::array<std::string, kNumLabels>& demos,
    const FormulationContext& ctx, std::optional<DisorderLabel> gold = std::nullopt);

/// Prompt template with the mask slot pre-filled by the candidate's
/// verbalizer token and half of the utterance tokens masked; targets are the
/// original utterance tokens. Callers control comparability across candidates
/// through the rng they pass (see per_utterance_rng).
FormulationInput build_inverse_input(std::string_view u, DisorderLabel candidate,
                                     const FormulationContext& ctx,
                                     std::mt19937_64& rng);

/// Deterministic per-utterance rng so that every candidate label of one
/// utterance is scored on identical mask positions.
std::mt19937_64 per_utterance_rng(std::string_view u, std::uint64_t run_seed);

/// Uniformly samples one demonstration utterance per class from a pool of
/// (text, label) pairs. Throws when a class is missing from the pool.
std::array<std::string, kNumLabels> sample_demonstrations(
    const std::vector<std::pair<std::string, DisorderLabel>>& pool,
    std::mt19937_64& rng);

}  // namespace linmark

#endif  // LINMARK_FORMULATION_HPP
