// SPDX-License-Identifier: Apache-2.0

#include "linmark/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "linmark/errors.hpp"

namespace linmark {

namespace {

using nlohmann::json;

json record_to_json(const UtteranceRecord& r) {
  json j{{"id", r.id},
         {"subject_id", r.subject_id},
         {"cohort", std::string(to_string(r.cohort))},
         {"visit", r.visit},
         {"utterance_text", r.text},
         {"label", std::string(to_string(r.label))}};
  if (r.mmse) j["mmse"] = *r.mmse;
  if (r.cdr) j["cdr"] = *r.cdr;
  return j;
}

UtteranceRecord record_from_json(const json& j) {
  UtteranceRecord r;
  r.id = j.at("id").get<std::string>();
  r.subject_id = j.at("subject_id").get<std::string>();
  r.cohort = cohort_from_string(j.at("cohort").get<std::string>());
  r.visit = j.at("visit").get<int>();
  r.text = j.at("utterance_text").get<std::string>();
  r.label = label_from_string(j.at("label").get<std::string>());
  if (j.contains("mmse")) r.mmse = j.at("mmse").get<int>();
  if (j.contains("cdr")) r.cdr = j.at("cdr").get<double>();
  return r;
}

}  // namespace

std::vector<SubjectSessions> group_by_subject(std::vector<SessionRecord> sessions) {
  std::map<std::string, std::vector<SessionRecord>> by_subject;
  for (auto& s : sessions) {
    by_subject[s.subject_id].push_back(std::move(s));
  }
  std::vector<SubjectSessions> out;
  out.reserve(by_subject.size());
  for (auto& [subject, recs] : by_subject) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const SessionRecord& a, const SessionRecord& b) {
                       return a.visit_index < b.visit_index;
                     });
    SubjectSessions subj;
    subj.subject_id = subject;
    subj.cohort = recs.front().cohort;
    int visit = 1;
    for (auto& r : recs) {
      r.visit_index = visit++;
      subj.sessions.push_back(std::move(r));
    }
    out.push_back(std::move(subj));
  }
  return out;
}

std::vector<UtteranceRecord> to_records(const std::vector<SubjectSessions>& subjects) {
  std::vector<UtteranceRecord> records;
  for (const auto& subj : subjects) {
    for (const auto& session : subj.sessions) {
      std::size_t index = 0;
      for (const auto& utt : session.utterances) {
        ++index;
        if (utt.speaker != Speaker::participant || !utt.label.has_value()) continue;
        if (utt.text.empty()) continue;  // nothing left after code stripping
        UtteranceRecord r;
        r.id = subj.subject_id + ":" + std::to_string(session.visit_index) + ":" +
               std::to_string(index);
        r.subject_id = subj.subject_id;
        r.cohort = subj.cohort;
        r.visit = session.visit_index;
        r.text = utt.text;
        r.label = *utt.label;
        r.mmse = session.mmse;
        r.cdr = session.cdr;
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

DatasetSplit stratified_split(const std::vector<UtteranceRecord>& corpus,
                              const SplitRatios& ratios, std::uint64_t seed) {
  if (corpus.empty()) throw ValidationError("stratified_split: empty corpus");
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("stratified_split: ratios must sum to 1");
  }

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;

  std::array<std::vector<std::size_t>, kNumLabels> by_class;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_class[label_index(corpus[i].label)].push_back(i);
  }

  std::mt19937_64 rng(seed);
  for (DisorderLabel label : kAllLabels) {
    auto& indices = by_class[label_index(label)];
    if (indices.empty()) continue;
    std::shuffle(indices.begin(), indices.end(), rng);
    if (indices.size() < 3) {
      split.warnings.push_back("class '" + std::string(to_string(label)) +
                               "' has fewer than 3 instances; placed wholly in train");
      for (std::size_t i : indices) split.train.push_back(corpus[i]);
      continue;
    }
    // largest-remainder allocation keeps per-class proportions tight
    const double n = static_cast<double>(indices.size());
    const std::array<double, 3> want = {n * ratios.train, n * ratios.validation,
                                        n * ratios.test};
    std::array<std::size_t, 3> take = {static_cast<std::size_t>(want[0]),
                                       static_cast<std::size_t>(want[1]),
                                       static_cast<std::size_t>(want[2])};
    std::size_t assigned = take[0] + take[1] + take[2];
    std::array<double, 3> rem = {want[0] - static_cast<double>(take[0]),
                                 want[1] - static_cast<double>(take[1]),
                                 want[2] - static_cast<double>(take[2])};
    while (assigned < indices.size()) {
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(rem.begin(), rem.end()) - rem.begin());
      ++take[best];
      rem[best] = -1.0;
      ++assigned;
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < take[0]; ++k) split.train.push_back(corpus[indices[pos++]]);
    for (std::size_t k = 0; k < take[1]; ++k) {
      split.validation.push_back(corpus[indices[pos++]]);
    }
    for (std::size_t k = 0; k < take[2]; ++k) split.test.push_back(corpus[indices[pos++]]);
  }
  return split;
}

std::map<Cohort, std::vector<SubjectSessions>> longitudinal_subset(
    const std::vector<SubjectSessions>& subjects, int min_sessions) {
  if (min_sessions < 2) {
    throw ValidationError("longitudinal_subset: min_sessions must be >= 2");
  }
  std::map<Cohort, std::vector<SubjectSessions>> out;
  for (const auto& subj : subjects) {
    if (subj.sessions.size() < static_cast<std::size_t>(min_sessions)) continue;
    out[subj.cohort].push_back(subj);
  }
  return out;
}

ClassCountSummary summarize_classes(const std::vector<SubjectSessions>& subjects) {
  ClassCountSummary summary;
  for (const auto& subj : subjects) {
    summary.subjects[subj.cohort] += 1;
    summary.sessions[subj.cohort] += subj.sessions.size();
    for (const auto& session : subj.sessions) {
      for (const auto& utt : session.utterances) {
        if (utt.speaker != Speaker::participant) continue;
        if (!utt.label.has_value()) {
          ++summary.excluded;
          continue;
        }
        summary.counts[subj.cohort][label_index(*utt.label)] += 1;
      }
    }
  }
  return summary;
}

void write_records(std::ostream& out, const std::vector<UtteranceRecord>& records) {
  for (const auto& r : records) {
    out << record_to_json(r).dump() << '\n';
  }
}

std::vector<UtteranceRecord> read_records(std::istream& in) {
  std::vector<UtteranceRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ValidationError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

void write_split_manifest(std::ostream& out, const DatasetSplit& split) {
  auto ids = [](const std::vector<UtteranceRecord>& part) {
    std::vector<std::string> v;
    v.reserve(part.size());
    for (const auto& r : part) v.push_back(r.id);
    return v;
  };
  json j{{"seed", split.seed},
         {"ratios",
          {{"train", split.ratios.train},
           {"validation", split.ratios.validation},
           {"test", split.ratios.test}}},
         {"train", ids(split.train)},
         {"validation", ids(split.validation)},
         {"test", ids(split.test)}};
  if (!split.warnings.empty()) j["warnings"] = split.warnings;
  out << j.dump(2) << '\n';
}

DatasetSplit read_split_manifest(std::istream& in,
                                 const std::vector<UtteranceRecord>& records) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("split manifest: ") + e.what());
  }
  std::map<std::string, const UtteranceRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  auto resolve = [&](const char* key) {
    std::vector<UtteranceRecord> part;
    for (const auto& id : j.at(key)) {
      const auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) {
        throw ValidationError("split manifest references unknown record id " +
                              id.get<std::string>());
      }
      part.push_back(*it->second);
    }
    return part;
  };
  DatasetSplit split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.ratios.train = j.at("ratios").at("train").get<double>();
  split.ratios.validation = j.at("ratios").at("validation").get<double>();
  split.ratios.test = j.at("ratios").at("test").get<double>();
  split.train = resolve("train");
  split.validation = resolve("validation");
  split.test = resolve("test");
  return split;
}

}  // namespace linmark
