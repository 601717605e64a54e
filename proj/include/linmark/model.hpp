// SPDX-License-Identifier: Apache-2.0
//
// Backend contract for a pre-trained masked language model with three heads
// sharing one encoder: 4-way sequence classification, mask filling over the
// vocabulary, and entailment pair classification.

#ifndef LINMARK_MODEL_HPP
#define LINMARK_MODEL_HPP

#include <array>
#include <vector>

#include "linmark/formulation.hpp"
#include "linmark/labels.hpp"

namespace linmark {

struct LossSpec {
  enum class Kind { cross_entropy_class, cross_entropy_mlm, joint_weighted };
  Kind kind = Kind::cross_entropy_class;
  // Joint multitask weights; the defaults follow the empirical inverse
  // minimum-loss weighting used for the joint objective.
  double w_cls = 1.0 / 0.5139;
  double w_mlm = 1.0 / 2.4149;

  static LossSpec classification() { return {Kind::cross_entropy_class, 1.0, 0.0}; }
  static LossSpec mlm() { return {Kind::cross_entropy_mlm, 0.0, 1.0}; }
  static LossSpec joint() { return {}; }
};

/// w_cls * l_cls + w_mlm * l_mlm. Throws on negative weights.
double joint_loss(double l_cls, double l_mlm, const LossSpec& spec);

class MaskedLmBackend {
 public:
  virtual ~MaskedLmBackend() = default;

  virtual int vocab_size() const = 0;
  virtual int max_sequence_length() const = 0;

  /// Probabilities over the 4 labels from the classification head; input must
  /// come from encode_standard and fit the sequence budget.
  virtual std::array<double, kNumLabels> classify(
      const std::vector<int>& tokens) const = 0;

  /// One normalized distribution over the vocabulary per requested position.
  /// Every position must hold a [MASK] token.
  virtual std::vector<std::vector<double>> fill_mask(
      const std::vector<int>& tokens, const std::vector<int>& positions) const = 0;

  /// {entails, not-entails} probabilities (indexed by PairLabel) for an
  /// encoded premise/hypothesis pair.
  virtual std::array<double, 2> pair_classify(
      const std::vector<int>& tokens) const = 0;

  /// Forward-only loss of one instance under a loss spec; used for
  /// validation and for the inverse strategy's candidate scoring.
  virtual double instance_loss(const FormulationInput& input,
                               const LossSpec& spec) const = 0;
};

}  // namespace linmark

#endif  // LINMARK_MODEL_HPP
