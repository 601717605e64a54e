// SPDX-License-Identifier: Apache-2.0
//
// CHAT transcript handling: tier parsing, paralinguistic code extraction,
// disorder labeling, and utterance cleaning.
//
// Coverage is deliberately narrow: header tiers, speaker tiers, and the nine
// annotation codes listed below. Dependent tiers (%mor, %gra, ...) are
// skipped and codes outside the scheme are preserved as `unknown` with a
// warning instead of failing, since real corpora carry many more codes.

#ifndef LINMARK_CHAT_HPP
#define LINMARK_CHAT_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "linmark/labels.hpp"

namespace linmark {

enum class ChatCodeKind {
  agrammatic,     // [+ gram]
  repetition,     // [/]
  revision,       // [//]
  fragment,       // &+ prefixed phonological fragment
  empty_speech,   // [+ es]
  trailing_off,   // +...
  circumlocution, // [+ cir]
  jargon,         // [+ jar]
  excluded,       // [+ exc]  non-descriptive utterance
  unknown,        // anything else that looks like a code
};

std::string_view to_string(ChatCodeKind k);

struct ChatCode {
  ChatCodeKind kind = ChatCodeKind::unknown;
  std::size_t begin = 0;  // character range in the raw tier content
  std::size_t end = 0;
  std::string text;  // verbatim marker, e.g. "[//]" or "&+sp"
};

enum class Speaker { participant, interviewer };

struct AnnotatedUtterance {
  std::string raw;   // verbatim tier content including codes
  std::string text;  // cleaned, code-free
  Speaker speaker = Speaker::participant;
  std::vector<ChatCode> codes;
  std::optional<DisorderLabel> label;  // nullopt = excluded
};

/// One picture-description session.
struct SessionRecord {
  std::string subject_id;
  Cohort cohort = Cohort::healthy;
  int visit_index = 1;  // 1-based order in study
  std::vector<AnnotatedUtterance> utterances;
  std::optional<int> mmse;    // 0..30
  std::optional<double> cdr;  // {0, 0.5, 1, 2, 3}
  std::vector<std::string> warnings;
};

/// Precedence used when codes from several disorders co-occur on one
/// utterance. Default is rarity-first to protect minority classes.
struct LabelPolicy {
  std::array<DisorderLabel, 3> precedence = {
      DisorderLabel::anomia, DisorderLabel::agrammatism, DisorderLabel::disfluency};
};

/// Scans one tier's content for annotation codes. Unknown code-like spans are
/// reported with kind `unknown`.
std::vector<ChatCode> extract_codes(std::string_view raw);

/// Maps an utterance's codes to its disorder label. Total over parsed
/// utterances: interviewer turns and `[+ exc]` yield excluded (nullopt), no
/// disorder code yields fluent.
std::optional<DisorderLabel> derive_label(const AnnotatedUtterance& utt,
                                          const LabelPolicy& policy = {});

/// Strips every code marker while keeping the spoken surface (retraced words,
/// fragments, fillers stay in place) and normalizes whitespace.
std::string clean_utterance(std::string_view raw);

/// Parses one CHAT document into a session.
///
/// Metadata mapping:
///   @ID of the participant  -> cohort (group field: Control / MCI / AD ...)
///   @PID                    -> subject id
///   @Comment "visit N"      -> visit index
///   @Comment "mmse N"       -> MMSE score
///   @Comment "cdr X"        -> CDR score
/// `source_name` (typically the file name, pattern <subject>-<visit>.cha) is
/// the fallback for subject id and visit index.
///
/// Throws ChatParseError on malformed tier lines and EmptySessionError when
/// the document has no participant tier.
SessionRecord parse_chat_file(std::istream& in, std::string_view source_name = "",
                              const LabelPolicy& policy = {});

}  // namespace linmark

#endif  // LINMARK_CHAT_HPP
