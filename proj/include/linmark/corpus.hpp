// SPDX-License-Identifier: Apache-2.0
//
// Normalized utterance records, dataset splits, and longitudinal views. The
// line-delimited record file written here is the interchange format between
// the parsing stage and everything downstream.

#ifndef LINMARK_CORPUS_HPP
#define LINMARK_CORPUS_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linmark/chat.hpp"
#include "linmark/labels.hpp"

namespace linmark {

/// One labeled utterance in the normalized interchange format.
struct UtteranceRecord {
  std::string id;  // subject:visit:index, stable across reruns
  std::string subject_id;
  Cohort cohort = Cohort::healthy;
  int visit = 1;
  std::string text;
  DisorderLabel label = DisorderLabel::fluent;
  std::optional<int> mmse;
  std::optional<double> cdr;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> validation;
  std::vector<UtteranceRecord> test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// A subject's sessions ordered by visit, as used by the longitudinal
/// analyses.
struct SubjectSessions {
  std::string subject_id;
  Cohort cohort = Cohort::healthy;
  std::vector<SessionRecord> sessions;  // strictly increasing visit_index
};

/// Orders each subject's sessions, renumbers visits contiguously from 1, and
/// drops interview-only sessions' ordering gaps. Input order breaks ties.
std::vector<SubjectSessions> group_by_subject(std::vector<SessionRecord> sessions);

/// Flattens the labeled (participant, non-excluded) utterances of a set of
/// sessions into normalized records.
std::vector<UtteranceRecord> to_records(const std::vector<SubjectSessions>& subjects);

/// Stratified utterance-level split, deterministic for a fixed seed. Classes
/// with fewer than 3 instances go wholly to train with a warning.
DatasetSplit stratified_split(const std::vector<UtteranceRecord>& corpus,
                              const SplitRatios& ratios, std::uint64_t seed);

/// Subjects with at least `min_sessions` sessions, grouped by cohort.
/// Requires min_sessions >= 2.
std::map<Cohort, std::vector<SubjectSessions>> longitudinal_subset(
    const std::vector<SubjectSessions>& subjects, int min_sessions);

/// Per-cohort class counts in the shape of the training-data overview table.
struct ClassCountSummary {
  // [cohort][label] labeled utterance counts plus session/subject totals
  std::map<Cohort, std::array<std::size_t, kNumLabels>> counts;
  std::map<Cohort, std::size_t> subjects;
  std::map<Cohort, std::size_t> sessions;
  std::size_t excluded = 0;
};

ClassCountSummary summarize_classes(const std::vector<SubjectSessions>& subjects);

// --- record file IO ------------------------------------------------------

void write_records(std::ostream& out, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_records(std::istream& in);

/// Split manifest: record ids per split plus the seed that produced them.
void write_split_manifest(std::ostream& out, const DatasetSplit& split);
DatasetSplit read_split_manifest(std::istream& in,
                                 const std::vector<UtteranceRecord>& records);

}  // namespace linmark

#endif  // LINMARK_CORPUS_HPP
