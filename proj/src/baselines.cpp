// SPDX-License-Identifier: Apache-2.0

#include "linmark/baselines.hpp"

#include <cmath>
#include <random>

#include "linmark/errors.hpp"
#include "linmark/tokenizer.hpp"

namespace linmark {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> word_tokens(const std::string& text) {
  std::vector<std::string> words;
  for (auto& tok : Tokenizer::split(text)) {
    if (tok.size() == 1 && std::ispunct(static_cast<unsigned char>(tok[0]))) continue;
    words.push_back(std::move(tok));
  }
  return words;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw ValidationError("incoherence marker: zero-norm embedding");
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

HashEmbeddingScorer::HashEmbeddingScorer(int dim) : dim_(dim) {
  if (dim < 2) throw ConfigError("embedding dimension must be >= 2");
}

std::vector<double> HashEmbeddingScorer::embed(const std::string& text) const {
  std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
  const auto words = word_tokens(text);
  for (const auto& word : words) {
    std::mt19937_64 rng(fnv1a(word));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double norm = 0.0;
    std::vector<double> vec(static_cast<std::size_t>(dim_));
    for (auto& v : vec) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += vec[d] / norm;
  }
  if (!words.empty()) {
    for (auto& v : out) v /= static_cast<double>(words.size());
  }
  return out;
}

RepetitionFluencyScorer::RepetitionFluencyScorer(double repeat_probability)
    : repeat_probability_(repeat_probability) {
  if (repeat_probability < 0.0 || repeat_probability > 1.0) {
    throw ConfigError("repeat probability must lie in [0,1]");
  }
}

std::vector<double> RepetitionFluencyScorer::score(const std::string& text) const {
  const auto words = word_tokens(text);
  std::vector<double> probs;
  probs.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const bool repeated = i > 0 && words[i] == words[i - 1];
    probs.push_back(repeated ? repeat_probability_ : 1.0);
  }
  return probs;
}

std::unique_ptr<EmbeddingScorer> make_embedding_scorer(const std::string& name) {
  if (name == "toy" || name == "hash") return std::make_unique<HashEmbeddingScorer>();
  throw ConfigError("unknown embedding scorer: " + name);
}

std::unique_ptr<WordFluencyScorer> make_word_fluency_scorer(const std::string& name) {
  if (name == "toy" || name == "repetition") {
    return std::make_unique<RepetitionFluencyScorer>();
  }
  throw ConfigError("unknown word fluency scorer: " + name);
}

double incoherence_marker(const std::vector<std::string>& utterances,
                          const EmbeddingScorer& scorer) {
  if (utterances.size() < 2) {
    throw ValidationError("incoherence marker undefined: need >= 2 utterances");
  }
  std::vector<std::vector<double>> embeddings;
  embeddings.reserve(utterances.size());
  for (const auto& u : utterances) embeddings.push_back(scorer.embed(u));
  double total = 0.0;
  for (std::size_t i = 1; i < embeddings.size(); ++i) {
    total += cosine(embeddings[i - 1], embeddings[i]);
  }
  return total / static_cast<double>(embeddings.size() - 1);
}

double word_fluency_marker(const std::vector<std::string>& utterances,
                           const WordFluencyScorer& scorer) {
  if (utterances.empty()) {
    throw ValidationError("word fluency marker undefined: empty session");
  }
  double session_total = 0.0;
  std::size_t scored = 0;
  for (const auto& u : utterances) {
    const auto probs = scorer.score(u);
    if (probs.empty()) continue;
    double total = 0.0;
    for (double p : probs) total += p;
    session_total += total / static_cast<double>(probs.size());
    ++scored;
  }
  if (scored == 0) {
    throw ValidationError("word fluency marker undefined: no scorable words");
  }
  return session_total / static_cast<double>(scored);
}

std::vector<std::string> included_texts(const SessionRecord& session) {
  std::vector<std::string> texts;
  for (const auto& utt : session.utterances) {
    if (utt.speaker == Speaker::participant && utt.label.has_value() &&
        !utt.text.empty()) {
      texts.push_back(utt.text);
    }
  }
  return texts;
}

}  // namespace linmark
