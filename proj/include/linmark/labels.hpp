// SPDX-License-Identifier: Apache-2.0

#ifndef LINMARK_LABELS_HPP
#define LINMARK_LABELS_HPP

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "linmark/errors.hpp"

namespace linmark {

/// The single-label space for utterance-level language disorders.
enum class DisorderLabel { fluent = 0, anomia = 1, disfluency = 2, agrammatism = 3 };

inline constexpr std::size_t kNumLabels = 4;

/// Canonical label order used for enumeration, reports, and demonstration
/// concatenation: fluent, anomia, disfluency, agrammatism.
inline constexpr std::array<DisorderLabel, kNumLabels> kAllLabels = {
    DisorderLabel::fluent, DisorderLabel::anomia, DisorderLabel::disfluency,
    DisorderLabel::agrammatism};

inline constexpr std::size_t label_index(DisorderLabel l) {
  return static_cast<std::size_t>(l);
}

std::string_view to_string(DisorderLabel l);
DisorderLabel label_from_string(std::string_view s);

enum class Cohort { healthy = 0, mci = 1, ad = 2 };

inline constexpr std::array<Cohort, 3> kAllCohorts = {Cohort::healthy, Cohort::mci,
                                                      Cohort::ad};

std::string_view to_string(Cohort c);
Cohort cohort_from_string(std::string_view s);

}  // namespace linmark

#endif  // LINMARK_LABELS_HPP
