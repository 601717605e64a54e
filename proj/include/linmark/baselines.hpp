// SPDX-License-Identifier: Apache-2.0
//
// The two comparison markers: semantic incoherence over adjacent utterance
// embeddings and word-level disfluency. Scorers are injected; the shipped
// implementations are deterministic stand-ins for the external pre-trained
// models those baselines normally wrap.

#ifndef LINMARK_BASELINES_HPP
#define LINMARK_BASELINES_HPP

#include <memory>
#include <string>
#include <vector>

#include "linmark/chat.hpp"

namespace linmark {

class EmbeddingScorer {
 public:
  virtual ~EmbeddingScorer() = default;
  /// Fixed-dimension embedding; deterministic per text.
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

class WordFluencyScorer {
 public:
  virtual ~WordFluencyScorer() = default;
  /// One fluency probability in [0,1] per word token.
  virtual std::vector<double> score(const std::string& text) const = 0;
};

/// Hash-seeded random unit vectors averaged over words. Similar word
/// multisets map to similar embeddings, which is all the incoherence
/// baseline needs from a stand-in.
class HashEmbeddingScorer : public EmbeddingScorer {
 public:
  explicit HashEmbeddingScorer(int dim = 32);
  std::vector<double> embed(const std::string& text) const override;

 private:
  int dim_;
};

/// Flags immediate word repetitions with low fluency probability.
class RepetitionFluencyScorer : public WordFluencyScorer {
 public:
  explicit RepetitionFluencyScorer(double repeat_probability = 0.0);
  std::vector<double> score(const std::string& text) const override;

 private:
  double repeat_probability_;
};

std::unique_ptr<EmbeddingScorer> make_embedding_scorer(const std::string& name);
std::unique_ptr<WordFluencyScorer> make_word_fluency_scorer(const std::string& name);

/// Mean cosine similarity over adjacent utterance pairs; higher means better
/// thematic consistency. Needs >= 2 utterances and nonzero embeddings.
double incoherence_marker(const std::vector<std::string>& utterances,
                          const EmbeddingScorer& scorer);

/// Mean word fluency within each utterance, then mean over the session;
/// higher means fewer disfluent patterns.
double word_fluency_marker(const std::vector<std::string>& utterances,
                           const WordFluencyScorer& scorer);

/// The participant utterance texts a session contributes to the baselines.
std::vector<std::string> included_texts(const SessionRecord& session);

}  // namespace linmark

#endif  // LINMARK_BASELINES_HPP
