// SPDX-License-Identifier: Apache-2.0

#include "linmark/labels.hpp"

#include <algorithm>
#include <cctype>

namespace linmark {

namespace {

std::string lowercased(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(DisorderLabel l) {
  switch (l) {
    case DisorderLabel::fluent:
      return "fluent";
    case DisorderLabel::anomia:
      return "anomia";
    case DisorderLabel::disfluency:
      return "disfluency";
    case DisorderLabel::agrammatism:
      return "agrammatism";
  }
  return "fluent";
}

DisorderLabel label_from_string(std::string_view s) {
  const std::string v = lowercased(s);
  for (DisorderLabel l : kAllLabels) {
    if (v == to_string(l)) return l;
  }
  throw ValidationError("unknown disorder label: " + std::string(s));
}

std::string_view to_string(Cohort c) {
  switch (c) {
    case Cohort::healthy:
      return "healthy";
    case Cohort::mci:
      return "mci";
    case Cohort::ad:
      return "ad";
  }
  return "healthy";
}

Cohort cohort_from_string(std::string_view s) {
  const std::string v = lowercased(s);
  if (v == "healthy" || v == "control" || v == "hc") return Cohort::healthy;
  if (v == "mci") return Cohort::mci;
  if (v == "ad" || v == "dementia") return Cohort::ad;
  throw ValidationError("unknown cohort: " + std::string(s));
}

}  // namespace linmark
