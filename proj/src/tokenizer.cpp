// SPDX-License-Identifier: Apache-2.0

#include "linmark/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>

#include "linmark/errors.hpp"

namespace linmark {

namespace {

constexpr std::string_view kControlTokens[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                               "[MASK]"};

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '\'' || c == '-';
}

bool is_punct_token(char c) {
  return c == '.' || c == ',' || c == '?' || c == '!' || c == ';' || c == ':';
}

}  // namespace

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
      if (is_punct_token(c)) tokens.emplace_back(1, c);
    }
  }
  flush();
  return tokens;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts,
                           const std::vector<std::string>& required_words) {
  std::set<std::string> words;
  for (const auto& text : texts) {
    for (auto& tok : split(text)) words.insert(std::move(tok));
  }
  for (const auto& word : required_words) {
    for (auto& tok : split(word)) words.insert(std::move(tok));
  }
  Tokenizer t;
  for (std::string_view control : kControlTokens) t.id_to_token_.emplace_back(control);
  t.id_to_token_.insert(t.id_to_token_.end(), words.begin(), words.end());
  t.index_tokens();
  return t;
}

void Tokenizer::index_tokens() {
  token_to_id_.clear();
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_[id_to_token_[i]] = static_cast<int>(i);
  }
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : split(text)) ids.push_back(token_id(tok));
  return ids;
}

int Tokenizer::token_id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Tokenizer::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= vocab_size()) {
    throw ValidationError("token id out of range: " + std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::string Tokenizer::render(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

void Tokenizer::save(std::ostream& out) const {
  for (const auto& tok : id_to_token_) out << tok << '\n';
}

Tokenizer Tokenizer::load(std::istream& in) {
  Tokenizer t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) t.id_to_token_.push_back(line);
  }
  if (t.id_to_token_.size() < 5) {
    throw ValidationError("vocabulary file too small to contain control tokens");
  }
  for (std::size_t i = 0; i < 5; ++i) {
    if (t.id_to_token_[i] != kControlTokens[i]) {
      throw ValidationError("vocabulary file missing control token " +
                            std::string(kControlTokens[i]));
    }
  }
  t.index_tokens();
  return t;
}

}  // namespace linmark
