// SPDX-License-Identifier: Apache-2.0
//
// A small bidirectional transformer encoder trained with hand-written
// backward passes. It exists so the full pipeline runs in seconds on a CPU;
// a checkpoint of a previously trained instance plays the role of the
// pre-trained backend.

#ifndef LINMARK_TINY_ENCODER_HPP
#define LINMARK_TINY_ENCODER_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "linmark/model.hpp"

namespace linmark {

struct TinyEncoderConfig {
  int vocab_size = 0;  // from the tokenizer
  int max_seq_len = 128;
  int d_model = 32;
  int n_heads = 2;
  int n_layers = 2;
  int d_ffn = 64;
  std::uint64_t init_seed = 1;

  void validate() const;
};

enum class OptimizerKind { adamw, adam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adamw;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // off unless configured
  double grad_clip = 0.0;     // 0 = off
};

class TinyEncoder : public MaskedLmBackend {
 public:
  explicit TinyEncoder(const TinyEncoderConfig& config);
  ~TinyEncoder() override;
  TinyEncoder(TinyEncoder&&) noexcept;
  TinyEncoder& operator=(TinyEncoder&&) noexcept;

  const TinyEncoderConfig& config() const;

  // MaskedLmBackend
  int vocab_size() const override;
  int max_sequence_length() const override;
  std::array<double, kNumLabels> classify(const std::vector<int>& tokens) const override;
  std::vector<std::vector<double>> fill_mask(
      const std::vector<int>& tokens, const std::vector<int>& positions) const override;
  std::array<double, 2> pair_classify(const std::vector<int>& tokens) const override;
  double instance_loss(const FormulationInput& input,
                       const LossSpec& spec) const override;

  // Training. One batch = gradient accumulation over the given instances
  // followed by a single optimizer step; returns the mean loss. Throws
  // TrainingError when the loss stops being finite.
  double train_batch(const std::vector<const FormulationInput*>& batch,
                     const LossSpec& spec, const OptimizerSettings& opt);

  /// Resets optimizer moment estimates (used when chaining objectives).
  void reset_optimizer_state();

  // Weight snapshots for checkpoint selection.
  std::vector<float> snapshot_weights() const;
  void restore_weights(const std::vector<float>& weights);

  void save(std::ostream& out) const;
  static TinyEncoder load(std::istream& in);

  /// Analytic gradient of the summed loss over `batch` with respect to every
  /// parameter; exposed for the finite-difference test oracle.
  std::vector<double> loss_gradient(const std::vector<const FormulationInput*>& batch,
                                    const LossSpec& spec) const;
  double batch_loss(const std::vector<const FormulationInput*>& batch,
                    const LossSpec& spec) const;
  std::size_t parameter_count() const;
  float get_parameter(std::size_t index) const;
  void set_parameter(std::size_t index, float value);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace linmark

#endif  // LINMARK_TINY_ENCODER_HPP
