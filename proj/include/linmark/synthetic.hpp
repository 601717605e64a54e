// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic picture-description corpus. Class-specific word
// pools and surface patterns make the four labels separable, cohorts carry
// planted disorder-rate and MMSE structure, and every utterance is emitted
// as an annotated CHAT tier so the fixture exercises the same parsing path
// as real data.

#ifndef LINMARK_SYNTHETIC_HPP
#define LINMARK_SYNTHETIC_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "linmark/chat.hpp"
#include "linmark/eval.hpp"
#include "linmark/labels.hpp"

namespace linmark {

struct SyntheticUtterance {
  std::string raw;  // annotated CHAT tier content
  std::string text;
  DisorderLabel label = DisorderLabel::fluent;
};

SyntheticUtterance synthesize_utterance(DisorderLabel label, std::mt19937_64& rng);

/// Balanced labeled set (n rounded up to a multiple of 4).
std::vector<LabeledUtterance> synthetic_labeled_set(int n, std::uint64_t seed);

struct SyntheticCorpusConfig {
  int subjects_per_cohort = 10;
  int sessions_per_subject = 3;
  int utterances_per_session = 10;
  std::uint64_t seed = 20240501;
};

/// In-memory sessions with cohort-ordered disorder rates (healthy < MCI < AD)
/// and an AD decline whose strength tracks (low) MMSE.
std::vector<SessionRecord> synthetic_sessions(const SyntheticCorpusConfig& config);

/// Writes one .cha file per session into `dir`; returns the file paths.
std::vector<std::filesystem::path> write_synthetic_corpus(
    const std::filesystem::path& dir, const SyntheticCorpusConfig& config);

}  // namespace linmark

#endif  // LINMARK_SYNTHETIC_HPP
