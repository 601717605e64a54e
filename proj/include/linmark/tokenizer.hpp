// SPDX-License-Identifier: Apache-2.0

#ifndef LINMARK_TOKENIZER_HPP
#define LINMARK_TOKENIZER_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace linmark {

/// Word-level tokenizer with a fixed vocabulary. Control markers occupy ids
/// 0..4; everything else is a lowercased word or a punctuation character.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;

  /// Splits text into surface tokens (no vocabulary lookup). Lowercases,
  /// keeps apostrophes and hyphens inside words, and emits punctuation as
  /// single-character tokens.
  static std::vector<std::string> split(std::string_view text);

  /// Builds a vocabulary from a corpus of texts plus words that must always
  /// be present (verbalizer images, template and definition words). Token
  /// order is lexicographic so the mapping is independent of corpus order.
  static Tokenizer build(const std::vector<std::string>& texts,
                         const std::vector<std::string>& required_words);

  std::vector<int> encode(std::string_view text) const;
  int token_id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  int vocab_size() const { return static_cast<int>(id_to_token_.size()); }

  /// Renders a token id sequence back to a space-separated string; used by
  /// golden tests and debugging output.
  std::string render(const std::vector<int>& ids) const;

  void save(std::ostream& out) const;
  static Tokenizer load(std::istream& in);

  bool is_control(int id) const { return id >= 0 && id <= kMask; }

 private:
  Tokenizer() = default;
  void index_tokens();

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace linmark

#endif  // LINMARK_TOKENIZER_HPP
