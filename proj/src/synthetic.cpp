// SPDX-License-Identifier: Apache-2.0

#include "linmark/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "linmark/errors.hpp"

namespace linmark {

namespace {

// class-exclusive content pools keep the labels separable at the vocabulary
// level, which every formulation (including the inverse objective) can learn
const char* kFluentNouns[] = {"mother", "boy", "girl", "dish", "cookie", "jar",
                              "sink"};
const char* kFluentVerbs[] = {"washes", "dries", "takes", "grabs", "watches"};
const char* kVagueNouns[] = {"thing", "stuff", "something", "whatsit", "bit"};
const char* kVagueVerbs[] = {"getting", "doing", "having", "using"};
const char* kWaterNouns[] = {"water", "spigot", "faucet", "tap", "hose"};
const char* kWaterVerbs[] = {"runs", "drips", "overflows", "splashes", "pours"};
const char* kGramNouns[] = {"stool", "window", "garden", "curtain", "floor"};
const char* kGramVerbs[] = {"climbing", "standing", "reaching", "holding",
                            "leaning"};

template <std::size_t N>
const char* pick(const char* (&pool)[N], std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, N - 1);
  return pool[d(rng)];
}

int roll(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, n - 1);
  return d(rng);
}

std::string fluent_raw(std::mt19937_64& rng) {
  std::ostringstream s;
  switch (roll(3, rng)) {
    case 0:
      s << "the " << pick(kFluentNouns, rng) << " " << pick(kFluentVerbs, rng)
        << " the " << pick(kFluentNouns, rng) << " .";
      break;
    case 1:
      s << "the " << pick(kFluentNouns, rng) << " " << pick(kFluentVerbs, rng)
        << " a " << pick(kFluentNouns, rng) << " .";
      break;
    default:
      s << "a " << pick(kFluentNouns, rng) << " and a " << pick(kFluentNouns, rng)
        << " .";
      break;
  }
  return s.str();
}

std::string anomia_raw(std::mt19937_64& rng) {
  std::ostringstream s;
  switch (roll(3, rng)) {
    case 0:
      s << "he is " << pick(kVagueVerbs, rng) << " the " << pick(kVagueNouns, rng)
        << " over there +...";
      break;
    case 1:
      s << "the " << pick(kVagueNouns, rng) << " with the " << pick(kVagueNouns, rng)
        << " . [+ jar]";
      break;
    default:
      s << "she keeps " << pick(kVagueVerbs, rng) << " that "
        << pick(kVagueNouns, rng) << " . [+ cir]";
      break;
  }
  return s.str();
}

std::string disfluency_raw(std::mt19937_64& rng) {
  std::ostringstream s;
  const char* noun = pick(kWaterNouns, rng);
  switch (roll(3, rng)) {
    case 0:
      s << "the [/] the " << noun << " " << pick(kWaterVerbs, rng) << " .";
      break;
    case 1:
      s << "the " << noun << " [//] the " << pick(kWaterNouns, rng) << " "
        << pick(kWaterVerbs, rng) << " .";
      break;
    default:
      s << "a &+" << std::string(noun).substr(0, 2) << " " << noun << " "
        << pick(kWaterVerbs, rng) << " .";
      break;
  }
  return s.str();
}

std::string agrammatism_raw(std::mt19937_64& rng) {
  std::ostringstream s;
  switch (roll(3, rng)) {
    case 0:
      s << "him " << pick(kGramVerbs, rng) << " " << pick(kGramNouns, rng)
        << " . [+ gram]";
      break;
    case 1:
      s << "her " << pick(kGramVerbs, rng) << " the " << pick(kGramNouns, rng)
        << " . [+ gram]";
      break;
    default:
      s << pick(kGramNouns, rng) << " " << pick(kGramVerbs, rng) << " from the "
        << pick(kGramNouns, rng) << " . [+ gram]";
      break;
  }
  return s.str();
}

AnnotatedUtterance annotate(const std::string& raw, Speaker speaker) {
  AnnotatedUtterance utt;
  utt.raw = raw;
  utt.speaker = speaker;
  utt.codes = extract_codes(raw);
  utt.text = clean_utterance(raw);
  utt.label = derive_label(utt);
  return utt;
}

std::string cohort_group_name(Cohort c) {
  switch (c) {
    case Cohort::healthy:
      return "Control";
    case Cohort::mci:
      return "MCI";
    case Cohort::ad:
      return "ProbableAD";
  }
  return "Control";
}

struct SubjectPlan {
  std::string id;
  Cohort cohort;
  int mmse_base;
  double cdr;
  double base_rate;      // disorder probability at the first visit
  double decline_slope;  // added per later visit
};

SubjectPlan plan_subject(Cohort cohort, int index, std::mt19937_64& rng) {
  SubjectPlan plan;
  plan.cohort = cohort;
  const char prefix = cohort == Cohort::healthy ? 'h' : (cohort == Cohort::mci ? 'm' : 'a');
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%03d", prefix, index % 1000);
  plan.id = buf;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (cohort) {
    case Cohort::healthy:
      plan.mmse_base = 27 + roll(4, rng);  // 27..30
      plan.cdr = roll(2, rng) == 0 ? 0.0 : 0.5;
      plan.base_rate = 0.08 + 0.08 * unit(rng);
      break;
    case Cohort::mci:
      plan.mmse_base = 22 + roll(5, rng);  // 22..26
      plan.cdr = roll(2, rng) == 0 ? 0.5 : 1.0;
      plan.base_rate = 0.28 + 0.10 * unit(rng);
      break;
    case Cohort::ad:
      plan.mmse_base = 13 + roll(9, rng);  // 13..21
      plan.cdr = plan.mmse_base >= 19 ? 1.0 : (plan.mmse_base >= 16 ? 2.0 : 3.0);
      plan.base_rate = 0.42 + 0.10 * unit(rng);
      break;
  }
  // decline tracks cognitive status: low MMSE declines fastest
  plan.decline_slope = std::max(0.0, (27.0 - plan.mmse_base)) * 0.016;
  return plan;
}

DisorderLabel pick_disorder(Cohort cohort, std::mt19937_64& rng) {
  // AD leans toward anomia, everyone shows disfluency most often
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  const double anomia_share = cohort == Cohort::ad ? 0.3 : 0.15;
  if (u < anomia_share) return DisorderLabel::anomia;
  if (u < anomia_share + 0.45) return DisorderLabel::disfluency;
  return DisorderLabel::agrammatism;
}

}  // namespace

SyntheticUtterance synthesize_utterance(DisorderLabel label, std::mt19937_64& rng) {
  SyntheticUtterance out;
  out.label = label;
  switch (label) {
    case DisorderLabel::fluent:
      out.raw = fluent_raw(rng);
      break;
    case DisorderLabel::anomia:
      out.raw = anomia_raw(rng);
      break;
    case DisorderLabel::disfluency:
      out.raw = disfluency_raw(rng);
      break;
    case DisorderLabel::agrammatism:
      out.raw = agrammatism_raw(rng);
      break;
  }
  out.text = clean_utterance(out.raw);
  const AnnotatedUtterance check = annotate(out.raw, Speaker::participant);
  if (check.label != label) {
    throw ValidationError("synthetic utterance labeled inconsistently: " + out.raw);
  }
  return out;
}

std::vector<LabeledUtterance> synthetic_labeled_set(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledUtterance> out;
  int i = 0;
  while (static_cast<int>(out.size()) < n) {
    for (DisorderLabel label : kAllLabels) {
      const SyntheticUtterance u = synthesize_utterance(label, rng);
      out.push_back(LabeledUtterance{"synth:" + std::to_string(i++), u.text, u.label});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<SessionRecord> synthetic_sessions(const SyntheticCorpusConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SessionRecord> sessions;
  for (Cohort cohort : kAllCohorts) {
    for (int s = 0; s < config.subjects_per_cohort; ++s) {
      const SubjectPlan plan = plan_subject(cohort, s + 1, rng);
      for (int visit = 1; visit <= config.sessions_per_subject; ++visit) {
        SessionRecord session;
        session.subject_id = plan.id;
        session.cohort = cohort;
        session.visit_index = visit;
        session.mmse = std::clamp(
            plan.mmse_base - (visit - 1) * (plan.decline_slope > 0.1 ? 1 : 0), 0, 30);
        session.cdr = plan.cdr;
        const double rate =
            std::min(0.85, plan.base_rate + plan.decline_slope * (visit - 1));
        for (int u = 0; u < config.utterances_per_session; ++u) {
          const DisorderLabel label = unit(rng) < rate
                                          ? pick_disorder(cohort, rng)
                                          : DisorderLabel::fluent;
          const SyntheticUtterance synth = synthesize_utterance(label, rng);
          session.utterances.push_back(annotate(synth.raw, Speaker::participant));
        }
        // a closing non-descriptive turn, excluded downstream
        session.utterances.push_back(
            annotate("okay that's all I see . [+ exc]", Speaker::participant));
        sessions.push_back(std::move(session));
      }
    }
  }
  return sessions;
}

std::vector<std::filesystem::path> write_synthetic_corpus(
    const std::filesystem::path& dir, const SyntheticCorpusConfig& config) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const SessionRecord& session : synthetic_sessions(config)) {
    const std::filesystem::path path =
        dir / (session.subject_id + "-" + std::to_string(session.visit_index) + ".cha");
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "@UTF8\n@Begin\n@Languages:\teng\n";
    out << "@Participants:\tPAR Participant, INV Investigator\n";
    out << "@ID:\teng|synthetic|PAR|||" << cohort_group_name(session.cohort)
        << "||Participant|||\n";
    out << "@ID:\teng|synthetic|INV|||||Investigator|||\n";
    out << "@PID:\t" << session.subject_id << "\n";
    out << "@Comment:\tvisit " << session.visit_index;
    if (session.mmse) out << " mmse " << *session.mmse;
    if (session.cdr) out << " cdr " << *session.cdr;
    out << "\n";
    out << "*INV:\ttell me everything you see going on in this picture .\n";
    for (const AnnotatedUtterance& utt : session.utterances) {
      out << "*PAR:\t" << utt.raw << "\n";
    }
    out << "@End\n";
    paths.push_back(path);
  }
  return paths;
}

}  // namespace linmark
