// SPDX-License-Identifier: Apache-2.0

#include "linmark/markers.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "linmark/errors.hpp"

namespace linmark {

std::string_view to_string(MarkerKind k) {
  switch (k) {
    case MarkerKind::communication:
      return "communication";
    case MarkerKind::anomia:
      return "anomia";
    case MarkerKind::disfluency:
      return "disfluency";
    case MarkerKind::agrammatism:
      return "agrammatism";
  }
  return "communication";
}

MarkerKind marker_kind_from_string(std::string_view s) {
  for (MarkerKind k : kAllMarkerKinds) {
    if (s == to_string(k)) return k;
  }
  throw ValidationError("unknown marker kind: " + std::string(s));
}

double session_marker_value(const std::vector<std::array<double, kNumLabels>>& probs,
                            MarkerKind kind) {
  if (probs.empty()) {
    throw ValidationError("session marker undefined: no included utterances");
  }
  const DisorderLabel label = kind == MarkerKind::communication
                                  ? DisorderLabel::fluent
                                  : (kind == MarkerKind::anomia
                                         ? DisorderLabel::anomia
                                         : (kind == MarkerKind::disfluency
                                                ? DisorderLabel::disfluency
                                                : DisorderLabel::agrammatism));
  double total = 0.0;
  for (const auto& p : probs) total += p[label_index(label)];
  const double mean = total / static_cast<double>(probs.size());
  return kind == MarkerKind::communication ? mean : 100.0 * mean;
}

double session_marker(const MaskedLmBackend& model, const StrategyRunner& runner,
                      const SessionRecord& session, MarkerKind kind) {
  std::vector<std::array<double, kNumLabels>> probs;
  for (const AnnotatedUtterance& utt : session.utterances) {
    if (utt.speaker != Speaker::participant || !utt.label.has_value() ||
        utt.text.empty()) {
      continue;
    }
    probs.push_back(runner.class_probabilities(model, utt.text));
  }
  return session_marker_value(probs, kind);
}

namespace {

void require_two_sessions(const MarkerSeries& series) {
  if (series.values.size() < 2) {
    throw ValidationError("marker series for subject '" + series.subject_id +
                          "' needs at least 2 sessions");
  }
}

double mean_of(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

// population standard deviation; a single observation has spread 0
double std_of(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

double delta_end_start(const MarkerSeries& series) {
  require_two_sessions(series);
  return series.values.back().value - series.values.front().value;
}

double delta_long(const MarkerSeries& series) {
  require_two_sessions(series);
  double total = 0.0;
  for (std::size_t i = 1; i < series.values.size(); ++i) {
    total += series.values[i].value - series.values[i - 1].value;
  }
  return total / static_cast<double>(series.values.size() - 1);
}

CohortSummary cohort_summary(const std::vector<MarkerSeries>& series,
                             std::string_view kind) {
  std::map<Cohort, std::vector<const MarkerSeries*>> by_cohort;
  for (const auto& s : series) {
    if (s.kind == kind) by_cohort[s.cohort].push_back(&s);
  }
  CohortSummary summary;
  for (Cohort cohort : kAllCohorts) {
    const auto it = by_cohort.find(cohort);
    if (it == by_cohort.end() || it->second.empty()) {
      summary.warnings.push_back("cohort '" + std::string(to_string(cohort)) +
                                 "' has no '" + std::string(kind) +
                                 "' series; omitted");
      continue;
    }
    std::vector<double> marker_means, des, dl;
    for (const MarkerSeries* s : it->second) {
      std::vector<double> values;
      for (const auto& p : s->values) values.push_back(p.value);
      marker_means.push_back(mean_of(values));
      if (s->values.size() >= 2) {
        des.push_back(delta_end_start(*s));
        dl.push_back(delta_long(*s));
      }
    }
    CohortMarkerRow row;
    row.cohort = cohort;
    row.kind = std::string(kind);
    row.n_subjects = it->second.size();
    row.marker_mean = mean_of(marker_means);
    row.marker_std = std_of(marker_means, row.marker_mean);
    if (!des.empty()) {
      row.delta_end_start_mean = mean_of(des);
      row.delta_end_start_std = std_of(des, row.delta_end_start_mean);
      row.delta_long_mean = mean_of(dl);
      row.delta_long_std = std_of(dl, row.delta_long_mean);
    }
    summary.rows.push_back(row);
  }
  return summary;
}

void write_marker_records(std::ostream& out, const std::vector<MarkerSeries>& series) {
  for (const auto& s : series) {
    for (const auto& p : s.values) {
      nlohmann::json j{{"subject", s.subject_id},
                       {"cohort", std::string(to_string(s.cohort))},
                       {"visit", p.visit},
                       {"kind", s.kind},
                       {"value", p.value}};
      out << j.dump() << '\n';
    }
  }
}

std::vector<MarkerSeries> read_marker_records(std::istream& in) {
  std::map<std::pair<std::string, std::string>, MarkerSeries> grouped;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string subject = j.at("subject").get<std::string>();
      const std::string kind = j.at("kind").get<std::string>();
      MarkerSeries& s = grouped[{subject, kind}];
      s.subject_id = subject;
      s.kind = kind;
      s.cohort = cohort_from_string(j.at("cohort").get<std::string>());
      s.values.push_back(
          MarkerPoint{j.at("visit").get<int>(), j.at("value").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("marker records line " + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  std::vector<MarkerSeries> out;
  out.reserve(grouped.size());
  for (auto& [key, s] : grouped) {
    std::sort(s.values.begin(), s.values.end(),
              [](const MarkerPoint& a, const MarkerPoint& b) {
                return a.visit < b.visit;
              });
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace linmark
