// SPDX-License-Identifier: Apache-2.0
//
// Digital linguistic markers: session-level aggregates of the model's class
// probabilities, their longitudinal deltas, and cohort summary tables. The
// same series/delta machinery also carries the baseline markers.

#ifndef LINMARK_MARKERS_HPP
#define LINMARK_MARKERS_HPP

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "linmark/chat.hpp"
#include "linmark/eval.hpp"
#include "linmark/labels.hpp"

namespace linmark {

/// Model-derived marker kinds. The communication marker is the session mean
/// of p(fluent) on [0,1]; each disorder marker is 100 x the session mean of
/// that disorder's probability.
enum class MarkerKind { communication, anomia, disfluency, agrammatism };

inline constexpr std::array<MarkerKind, 4> kAllMarkerKinds = {
    MarkerKind::communication, MarkerKind::anomia, MarkerKind::disfluency,
    MarkerKind::agrammatism};

std::string_view to_string(MarkerKind k);
MarkerKind marker_kind_from_string(std::string_view s);

struct MarkerPoint {
  int visit = 0;
  double value = 0.0;
};

/// Per-individual ordered marker trajectory. `kind` is a marker name so the
/// baseline markers ("incoherence", "word-fluency") flow through the same
/// pipeline as the model markers.
struct MarkerSeries {
  std::string subject_id;
  Cohort cohort = Cohort::healthy;
  std::string kind;
  std::vector<MarkerPoint> values;  // ordered by visit
};

/// Session marker from per-utterance class distributions (order follows
/// kAllLabels). Throws when no utterances are given.
double session_marker_value(const std::vector<std::array<double, kNumLabels>>& probs,
                            MarkerKind kind);

/// Runs the strategy's prediction rule over the session's included
/// utterances (participant, labeled, nonempty) and aggregates.
double session_marker(const MaskedLmBackend& model, const StrategyRunner& runner,
                      const SessionRecord& session, MarkerKind kind);

/// value(last) - value(first). Positive means improvement for the
/// communication marker. Requires >= 2 sessions.
double delta_end_start(const MarkerSeries& series);

/// Mean of adjacent-session changes; telescopes to (last-first)/(n-1).
double delta_long(const MarkerSeries& series);

struct CohortMarkerRow {
  Cohort cohort = Cohort::healthy;
  std::string kind;
  std::size_t n_subjects = 0;
  double marker_mean = 0.0;
  double marker_std = 0.0;
  double delta_end_start_mean = 0.0;
  double delta_end_start_std = 0.0;
  double delta_long_mean = 0.0;
  double delta_long_std = 0.0;
};

struct CohortSummary {
  std::vector<CohortMarkerRow> rows;  // cohort order healthy, mci, ad
  std::vector<std::string> warnings;  // empty cohorts
};

/// Per-cohort marker statistics in the shape of the longitudinal comparison
/// tables: subject-level values first (session mean, both deltas), then
/// mean and population standard deviation over the cohort's subjects.
CohortSummary cohort_summary(const std::vector<MarkerSeries>& series,
                             std::string_view kind);

// marker record files: {subject, cohort, visit, kind, value} per line
void write_marker_records(std::ostream& out, const std::vector<MarkerSeries>& series);
std::vector<MarkerSeries> read_marker_records(std::istream& in);

}  // namespace linmark

#endif  // LINMARK_MARKERS_HPP
