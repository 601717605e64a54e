// SPDX-License-Identifier: Apache-2.0

#include "linmark/chat.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <sstream>

#include "linmark/errors.hpp"

namespace linmark {

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '\'' || c == '-' || c == '_';
}

std::string lowercased(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

// Classifies the inside of a bracketed code, e.g. "//" or "+ gram".
ChatCodeKind classify_bracket(std::string_view inner) {
  inner = trimmed(inner);
  if (inner == "/") return ChatCodeKind::repetition;
  if (inner == "//") return ChatCodeKind::revision;
  if (!inner.empty() && inner.front() == '+') {
    inner.remove_prefix(1);
    inner = trimmed(inner);
    const std::string key = lowercased(inner);
    if (key == "gram") return ChatCodeKind::agrammatic;
    if (key == "es") return ChatCodeKind::empty_speech;
    if (key == "cir") return ChatCodeKind::circumlocution;
    if (key == "jar") return ChatCodeKind::jargon;
    if (key == "exc") return ChatCodeKind::excluded;
  }
  return ChatCodeKind::unknown;
}

bool is_ellipsis_token(std::string_view tok) {
  if (tok == "+...") return true;
  return tok == "+…";  // +…
}

// One left-to-right scan shared by code extraction and cleaning. `clean`
// may be null when only the codes are wanted.
void scan_tier(std::string_view raw, std::vector<ChatCode>* codes, std::string* clean) {
  const std::size_t n = raw.size();
  std::size_t i = 0;
  auto emit = [&](ChatCodeKind kind, std::size_t b, std::size_t e) {
    if (codes != nullptr) {
      codes->push_back(ChatCode{kind, b, e, std::string(raw.substr(b, e - b))});
    }
  };
  while (i < n) {
    const char c = raw[i];
    if (c == '[') {
      std::size_t j = raw.find(']', i + 1);
      if (j == std::string_view::npos) {
        emit(ChatCodeKind::unknown, i, n);
        break;
      }
      emit(classify_bracket(raw.substr(i + 1, j - i - 1)), i, j + 1);
      i = j + 1;
    } else if (c == '<' || c == '>') {
      // retrace group delimiters; the grouped words stay
      ++i;
    } else if (c == '&') {
      std::size_t j = i + 1;
      bool keep_text = true;
      ChatCodeKind kind = ChatCodeKind::unknown;
      if (j < n && raw[j] == '+') {
        kind = ChatCodeKind::fragment;
        ++j;
      } else if (j < n && raw[j] == '-') {
        ++j;  // filler; spoken, so the word stays
      } else if (j < n && raw[j] == '=') {
        keep_text = false;  // event such as &=laughs, nothing spoken
        ++j;
      }
      std::size_t k = j;
      while (k < n && is_word_char(raw[k])) ++k;
      emit(kind, i, k);
      if (keep_text && clean != nullptr) clean->append(raw.substr(j, k - j));
      i = k;
    } else if (c == '+') {
      std::size_t k = i;
      while (k < n && !std::isspace(static_cast<unsigned char>(raw[k]))) ++k;
      const std::string_view tok = raw.substr(i, k - i);
      if (is_ellipsis_token(tok)) {
        emit(ChatCodeKind::trailing_off, i, k);
      } else if (lowercased(tok) == "+es") {
        emit(ChatCodeKind::empty_speech, i, k);
      } else if (tok == "+") {
        // bare "+ es" two-token form
        std::size_t w = k;
        while (w < n && std::isspace(static_cast<unsigned char>(raw[w]))) ++w;
        std::size_t we = w;
        while (we < n && is_word_char(raw[we])) ++we;
        if (lowercased(raw.substr(w, we - w)) == "es") {
          emit(ChatCodeKind::empty_speech, i, we);
          k = we;
        } else {
          emit(ChatCodeKind::unknown, i, k);
        }
      } else {
        emit(ChatCodeKind::unknown, i, k);
      }
      i = k;
    } else if (c == '(') {
      std::size_t j = raw.find(')', i + 1);
      if (j == std::string_view::npos) {
        ++i;
        continue;
      }
      const std::string_view inner = raw.substr(i + 1, j - i - 1);
      const bool pause = std::all_of(inner.begin(), inner.end(),
                                     [](char ch) { return ch == '.' || ch == ' '; });
      if (!pause && clean != nullptr) clean->append(inner);
      i = j + 1;
    } else {
      if (clean != nullptr) clean->push_back(c);
      ++i;
    }
  }
}

std::string normalize_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    const bool closing = c == '.' || c == ',' || c == '?' || c == '!' || c == ';' ||
                         c == ':';
    if (pending_space && !closing) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

struct Tier {
  std::size_t line = 0;  // 1-based number of the first physical line
  std::string text;      // logical line with continuations joined
};

std::vector<Tier> read_logical_lines(std::istream& in) {
  std::vector<Tier> tiers;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trimmed(line).empty()) continue;
    const bool continuation =
        (line.front() == '\t' || line.front() == ' ') && !tiers.empty();
    if (continuation) {
      tiers.back().text.push_back(' ');
      tiers.back().text.append(trimmed(line));
    } else {
      tiers.push_back(Tier{lineno, std::string(trimmed(line))});
    }
  }
  return tiers;
}

// "@Comment: visit 2 mmse 27" style free-text metadata.
void apply_comment_metadata(const std::string& value, std::size_t line,
                            SessionRecord& record) {
  std::istringstream in(lowercased(value));
  std::string word;
  while (in >> word) {
    if (word == "visit") {
      int v = 0;
      if (in >> v) record.visit_index = v;
    } else if (word == "mmse") {
      int v = 0;
      if (in >> v) {
        if (v < 0 || v > 30) {
          throw ChatParseError(line, "MMSE out of range [0,30]: " + std::to_string(v));
        }
        record.mmse = v;
      }
    } else if (word == "cdr") {
      double v = 0;
      if (in >> v) {
        const bool valid = v == 0.0 || v == 0.5 || v == 1.0 || v == 2.0 || v == 3.0;
        if (!valid) throw ChatParseError(line, "CDR not in {0,0.5,1,2,3}");
        record.cdr = v;
      }
    }
  }
}

Cohort cohort_from_group(std::string_view group, std::vector<std::string>& warnings) {
  const std::string g = lowercased(group);
  if (g.find("control") != std::string::npos || g.find("healthy") != std::string::npos) {
    return Cohort::healthy;
  }
  if (g.find("mci") != std::string::npos) return Cohort::mci;
  if (g.find("ad") != std::string::npos || g.find("dementia") != std::string::npos ||
      g.find("memory") != std::string::npos || g.find("vascular") != std::string::npos) {
    return Cohort::ad;
  }
  warnings.push_back("unrecognized cohort group '" + std::string(group) +
                     "', defaulting to healthy");
  return Cohort::healthy;
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void apply_source_name(std::string_view source_name, SessionRecord& record) {
  std::string_view stem = source_name;
  if (const auto slash = stem.find_last_of("/\\"); slash != std::string_view::npos) {
    stem.remove_prefix(slash + 1);
  }
  if (const auto dot = stem.rfind('.'); dot != std::string_view::npos) {
    stem = stem.substr(0, dot);
  }
  if (stem.empty()) return;
  const auto dash = stem.rfind('-');
  std::string_view subject = stem;
  if (dash != std::string_view::npos && dash + 1 < stem.size()) {
    const std::string_view suffix = stem.substr(dash + 1);
    const bool digits = std::all_of(suffix.begin(), suffix.end(), [](char c) {
      return std::isdigit(static_cast<unsigned char>(c)) != 0;
    });
    if (digits) {
      subject = stem.substr(0, dash);
      if (record.visit_index == 1) {
        record.visit_index = std::max(1, std::stoi(std::string(suffix)));
      }
    }
  }
  if (record.subject_id.empty()) record.subject_id = std::string(subject);
}

}  // namespace

std::string_view to_string(ChatCodeKind k) {
  switch (k) {
    case ChatCodeKind::agrammatic:
      return "[+ gram]";
    case ChatCodeKind::repetition:
      return "[/]";
    case ChatCodeKind::revision:
      return "[//]";
    case ChatCodeKind::fragment:
      return "&+";
    case ChatCodeKind::empty_speech:
      return "[+ es]";
    case ChatCodeKind::trailing_off:
      return "+...";
    case ChatCodeKind::circumlocution:
      return "[+ cir]";
    case ChatCodeKind::jargon:
      return "[+ jar]";
    case ChatCodeKind::excluded:
      return "[+ exc]";
    case ChatCodeKind::unknown:
      return "unknown";
  }
  return "unknown";
}

std::vector<ChatCode> extract_codes(std::string_view raw) {
  std::vector<ChatCode> codes;
  scan_tier(raw, &codes, nullptr);
  return codes;
}

std::string clean_utterance(std::string_view raw) {
  std::string clean;
  clean.reserve(raw.size());
  scan_tier(raw, nullptr, &clean);
  return normalize_whitespace(clean);
}

std::optional<DisorderLabel> derive_label(const AnnotatedUtterance& utt,
                                          const LabelPolicy& policy) {
  if (utt.speaker == Speaker::interviewer) return std::nullopt;
  bool present[kNumLabels] = {false, false, false, false};
  for (const ChatCode& code : utt.codes) {
    switch (code.kind) {
      case ChatCodeKind::excluded:
        return std::nullopt;
      case ChatCodeKind::empty_speech:
      case ChatCodeKind::trailing_off:
      case ChatCodeKind::circumlocution:
      case ChatCodeKind::jargon:
        present[label_index(DisorderLabel::anomia)] = true;
        break;
      case ChatCodeKind::agrammatic:
        present[label_index(DisorderLabel::agrammatism)] = true;
        break;
      case ChatCodeKind::repetition:
      case ChatCodeKind::revision:
      case ChatCodeKind::fragment:
        present[label_index(DisorderLabel::disfluency)] = true;
        break;
      case ChatCodeKind::unknown:
        break;
    }
  }
  for (DisorderLabel l : policy.precedence) {
    if (present[label_index(l)]) return l;
  }
  return DisorderLabel::fluent;
}

SessionRecord parse_chat_file(std::istream& in, std::string_view source_name,
                              const LabelPolicy& policy) {
  SessionRecord record;
  bool saw_participant_tier = false;
  for (const Tier& tier : read_logical_lines(in)) {
    const std::string& text = tier.text;
    if (text.front() == '@') {
      const std::size_t colon = text.find(':');
      const std::string name =
          lowercased(trimmed(text.substr(1, colon == std::string::npos
                                                ? std::string::npos
                                                : colon - 1)));
      const std::string value =
          colon == std::string::npos ? "" : std::string(trimmed(text.substr(colon + 1)));
      if (name == "id") {
        const auto fields = split_on(value, '|');
        if (fields.size() > 5 && lowercased(trimmed(fields[2])) == "par") {
          record.cohort = cohort_from_group(trimmed(fields[5]), record.warnings);
        }
      } else if (name == "pid") {
        record.subject_id = value;
      } else if (name == "comment") {
        apply_comment_metadata(value, tier.line, record);
      }
      continue;
    }
    if (text.front() == '%') continue;  // dependent tiers are out of scope
    if (text.front() == '*') {
      const std::size_t colon = text.find(':');
      if (colon == std::string::npos || colon < 2) {
        throw ChatParseError(tier.line, "speaker tier without ':' separator");
      }
      const std::string code = std::string(trimmed(text.substr(1, colon - 1)));
      AnnotatedUtterance utt;
      utt.speaker = lowercased(code) == "par" ? Speaker::participant
                                              : Speaker::interviewer;
      if (utt.speaker == Speaker::participant) saw_participant_tier = true;
      utt.raw = std::string(trimmed(text.substr(colon + 1)));
      utt.codes = extract_codes(utt.raw);
      utt.text = clean_utterance(utt.raw);
      utt.label = derive_label(utt, policy);
      for (const ChatCode& c : utt.codes) {
        if (c.kind == ChatCodeKind::unknown) {
          record.warnings.push_back("line " + std::to_string(tier.line) +
                                    ": unknown CHAT code '" + c.text + "' preserved");
        }
      }
      record.utterances.push_back(std::move(utt));
      continue;
    }
    throw ChatParseError(tier.line, "malformed tier line: " + text.substr(0, 40));
  }
  apply_source_name(source_name, record);
  if (!saw_participant_tier) {
    throw EmptySessionError(record.utterances.empty()
                                ? "document has no tiers"
                                : "document has no participant tier");
  }
  return record;
}

}  // namespace linmark
