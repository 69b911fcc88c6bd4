#pragma once

// CHAT (.cha) transcript parsing.
//
// Supported marker subset on main tiers:
//   [/]  Repetition            [//] [///] [/-] [/?]  Retrace
//   [: text] [:: text]         ReplacementLink (binds to preceding token/group)
//   [* p...] [* s...] [* ...]  ErrorCode (Pronunciation / Semantic / OtherError)
//   [+ ...]                    postcode, Other annotation over the utterance
//   any other [...]            Other annotation
//   <...>                      grouping scope (may nest)
//   xxx yyy www                Unintelligible
//   &=event                    NonSpeechEvent
//   &+frag &-uh &~frag         Fragment
//   word@u                     PhonologicalForm (Unibet transcription)
//   0word                      omitted word, Other annotation with an empty scope
//   . ? ! +... +/. +//. etc.   utterance terminator (stored on the utterance)
//   •start_end• or ^Ustart_end^U   time bullet
//
// Annotation scopes are half-open token index ranges [begin, end).

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adaptbench/error.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::chat {

enum class TokenKind { Word, Fragment, Unintelligible, NonSpeechEvent, PhonologicalForm };
enum class AnnotationKind { Retrace, Repetition, ErrorCode, ReplacementLink, Other };
enum class ErrorClass { Pronunciation, Semantic, OtherError };
enum class Severity { Recoverable, Dropped };

struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const ByteSpan&) const = default;
};

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const TokenRange&) const = default;
};

struct Token {
  std::string surface;
  TokenKind kind = TokenKind::Word;
  std::optional<std::string> replacement;
  ByteSpan span;
  bool operator==(const Token&) const = default;
};

struct Annotation {
  AnnotationKind kind = AnnotationKind::Other;
  std::optional<ErrorClass> error_class;
  TokenRange scope;
  std::string raw_marker;
  // Replacement text for ReplacementLink, code body ("p:w") for ErrorCode.
  std::string payload;
  bool operator==(const Annotation&) const = default;
};

struct TimeAlignment {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::int64_t duration_ms() const { return end_ms - start_ms; }
  bool operator==(const TimeAlignment&) const = default;
};

struct ParseWarning {
  std::size_t line_no = 1;
  std::string message;
  Severity severity = Severity::Recoverable;
  bool operator==(const ParseWarning&) const = default;
};

struct Participant {
  std::string code;
  std::string role;
  bool operator==(const Participant&) const = default;
};

struct DependentTier {
  std::string name;  // without the leading '%'
  std::string text;
  bool operator==(const DependentTier&) const = default;
};

struct Utterance {
  std::string utt_id;
  std::string speaker_code;
  std::vector<Token> tokens;
  std::vector<Annotation> annotations;
  std::optional<TimeAlignment> alignment;
  std::string raw_text;
  std::string terminator;
  std::vector<DependentTier> dependent_tiers;
  std::size_t line_no = 0;
  bool operator==(const Utterance&) const = default;
};

struct ChatDocument {
  std::string source_path;
  std::vector<Participant> participants;
  std::optional<std::string> media;
  std::vector<std::pair<std::string, std::string>> headers;
  std::vector<Utterance> utterances;
  std::vector<ParseWarning> warnings;

  bool has_participant(std::string_view code) const {
    return std::any_of(participants.begin(), participants.end(),
                       [&](const Participant& p) { return p.code == code; });
  }
  std::string role_of(std::string_view code) const {
    for (const auto& p : participants)
      if (p.code == code) return p.role;
    return {};
  }
  bool operator==(const ChatDocument&) const = default;
};

/// Result of tokenizing one main tier. Warning line numbers are relative to
/// the first line of the tier (1-based).
struct TierParse {
  std::vector<Token> tokens;
  std::vector<Annotation> annotations;
  std::string terminator;
  std::vector<TimeAlignment> bullets;
  std::vector<ParseWarning> warnings;
};

namespace detail {

constexpr std::string_view kBullet = "\xE2\x80\xA2";  // U+2022
constexpr char kNak = '\x15';

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

inline bool is_terminator(std::string_view w) {
  if (w == "." || w == "?" || w == "!") return true;
  if (w.size() > 1 && w.front() == '+') {
    char last = w.back();
    return last == '.' || last == '?' || last == '!';
  }
  return false;
}

inline bool is_pause(std::string_view w) {
  if (w.size() < 3 || w.front() != '(' || w.back() != ')') return false;
  auto inner = w.substr(1, w.size() - 2);
  return std::all_of(inner.begin(), inner.end(), [](char c) {
    return c == '.' || c == ':' || (c >= '0' && c <= '9');
  }) && inner.find('.') != std::string_view::npos;
}

inline bool is_separator(std::string_view w) {
  // , ; : and the CHAT prosodic/quotation separators.
  static constexpr std::string_view kSeps[] = {",", ";", ":", "\xE2\x80\x9E" /* „ */,
                                               "\xE2\x80\xA1" /* ‡ */, "\xE2\x80\x9C" /* “ */,
                                               "\xE2\x80\x9D" /* ” */, "\""};
  while (!w.empty()) {
    bool matched = false;
    for (auto s : kSeps) {
      if (w.substr(0, s.size()) == s) {
        w.remove_prefix(s.size());
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  return true;
}

inline bool has_word_content(std::string_view w) {
  return std::any_of(w.begin(), w.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
  });
}

inline std::size_t line_of(std::string_view text, std::size_t pos) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(pos, text.size()), '\n'));
}

inline std::optional<TimeAlignment> parse_bullet(std::string_view body) {
  // Accepts "start_end" and legacy forms with a prefix, e.g. %snd:"f"_start_end.
  auto last = body.rfind('_');
  if (last == std::string_view::npos || last == 0) return std::nullopt;
  auto prev = body.rfind('_', last - 1);
  auto a = prev == std::string_view::npos ? body.substr(0, last) : body.substr(prev + 1, last - prev - 1);
  auto b = body.substr(last + 1);
  std::int64_t s = 0, e = 0;
  auto r1 = std::from_chars(a.data(), a.data() + a.size(), s);
  auto r2 = std::from_chars(b.data(), b.data() + b.size(), e);
  if (a.empty() || b.empty() || r1.ec != std::errc{} || r1.ptr != a.data() + a.size() ||
      r2.ec != std::errc{} || r2.ptr != b.data() + b.size() || s < 0 || e < 0)
    return std::nullopt;
  return TimeAlignment{s, e};
}

class TierTokenizer {
 public:
  explicit TierTokenizer(std::string_view text) : text_(text) {}

  TierParse run() {
    std::size_t pos = 0;
    while (pos < text_.size()) {
      char c = text_[pos];
      if (is_space(c)) {
        ++pos;
      } else if (c == '[') {
        pos = marker(pos);
      } else if (c == '<') {
        groups_.push_back({out_.tokens.size(), pos});
        last_scope_.reset();
        ++pos;
      } else if (c == '>') {
        if (groups_.empty()) {
          warn(pos, "unbalanced '>' (UnbalancedAngle)");
          other(TokenRange{out_.tokens.size(), out_.tokens.size()}, ">");
        } else {
          last_scope_ = TokenRange{groups_.back().first_token, out_.tokens.size()};
          groups_.pop_back();
        }
        ++pos;
      } else if (bullet_at(pos)) {
        pos = bullet(pos);
      } else {
        std::size_t end = pos;
        while (end < text_.size() && !is_space(text_[end]) && text_[end] != '[' &&
               text_[end] != '<' && text_[end] != '>' && !bullet_at(end))
          ++end;
        word(pos, end);
        pos = end;
      }
    }
    for (auto it = groups_.rbegin(); it != groups_.rend(); ++it) {
      warn(it->byte_pos, "unbalanced '<' (UnbalancedAngle)");
      other(TokenRange{it->first_token, out_.tokens.size()}, "<");
    }
    return std::move(out_);
  }

 private:
  struct Group {
    std::size_t first_token;
    std::size_t byte_pos;
  };

  bool bullet_at(std::size_t pos) const {
    return text_[pos] == kNak || text_.substr(pos, kBullet.size()) == kBullet;
  }

  void warn(std::size_t pos, std::string msg, Severity sev = Severity::Recoverable) {
    out_.warnings.push_back({line_of(text_, pos), std::move(msg), sev});
  }

  void other(TokenRange scope, std::string raw) {
    out_.annotations.push_back({AnnotationKind::Other, std::nullopt, scope, std::move(raw), {}});
  }

  std::size_t bullet(std::size_t pos) {
    std::string_view delim = text_[pos] == kNak ? std::string_view(&text_[pos], 1) : kBullet;
    std::size_t body_start = pos + delim.size();
    std::size_t close = text_.find(delim, body_start);
    if (close == std::string_view::npos) {
      warn(pos, "unterminated time bullet");
      other(TokenRange{out_.tokens.size(), out_.tokens.size()}, std::string(text_.substr(pos)));
      return text_.size();
    }
    auto body = text_.substr(body_start, close - body_start);
    if (auto b = parse_bullet(body)) {
      out_.bullets.push_back(*b);
    } else {
      warn(pos, "unrecognized time bullet '" + std::string(body) + "'");
    }
    return close + delim.size();
  }

  std::size_t marker(std::size_t pos) {
    std::size_t close = text_.find(']', pos + 1);
    std::size_t n = out_.tokens.size();
    if (close == std::string_view::npos) {
      warn(pos, "unbalanced '[' (UnbalancedBracket)");
      other(TokenRange{n, n}, std::string(text_.substr(pos)));
      return text_.size();
    }
    std::string raw(text_.substr(pos, close - pos + 1));
    std::string_view body = trim(text_.substr(pos + 1, close - pos - 1));

    Annotation a;
    a.raw_marker = raw;
    bool needs_scope = true;
    if (body == "/") {
      a.kind = AnnotationKind::Repetition;
    } else if (body == "//" || body == "///" || body == "/-" || body == "/?") {
      a.kind = AnnotationKind::Retrace;
    } else if (!body.empty() && body[0] == ':' && body.substr(0, 2) != ":=") {
      auto rest = body.substr(body.find_first_not_of(':') == std::string_view::npos
                                  ? body.size()
                                  : body.find_first_not_of(':'));
      rest = trim(rest);
      if (rest.empty()) {
        warn(pos, "empty replacement " + raw);
        other(TokenRange{n, n}, raw);
        return close + 1;
      }
      a.kind = AnnotationKind::ReplacementLink;
      a.payload = std::string(rest);
    } else if (!body.empty() && body[0] == '*') {
      a.kind = AnnotationKind::ErrorCode;
      auto code = trim(body.substr(1));
      a.payload = std::string(code);
      auto cls = [&](char c) { return !code.empty() && code[0] == c && (code.size() == 1 || code[1] == ':'); };
      a.error_class = cls('p') ? ErrorClass::Pronunciation
                      : cls('s') ? ErrorClass::Semantic
                                 : ErrorClass::OtherError;
    } else if (!body.empty() && body[0] == '+') {
      a.kind = AnnotationKind::Other;
      a.scope = TokenRange{0, n};
      needs_scope = false;
    } else {
      a.kind = AnnotationKind::Other;
      a.scope = last_scope_.value_or(TokenRange{n, n});
      needs_scope = false;
    }

    if (needs_scope) {
      if (!last_scope_ || last_scope_->empty()) {
        warn(pos, "marker " + raw + " has nothing to attach to");
        other(TokenRange{n, n}, raw);
        return close + 1;
      }
      a.scope = *last_scope_;
      if (a.kind == AnnotationKind::ReplacementLink) out_.tokens[a.scope.begin].replacement = a.payload;
    }
    out_.annotations.push_back(std::move(a));
    return close + 1;
  }

  void word(std::size_t begin, std::size_t end) {
    std::string_view w = text_.substr(begin, end - begin);
    std::size_t n = out_.tokens.size();
    if (is_terminator(w)) {
      out_.terminator = std::string(w);
      return;
    }
    if (w.front() == '+') {
      other(TokenRange{n, n}, std::string(w));  // linker, e.g. +< ++ +^
      return;
    }
    if (is_pause(w) || is_separator(w)) return;

    // Terminator glued to the final word, e.g. "dog."
    char last = w.back();
    if ((last == '.' || last == '?' || last == '!') && w.size() > 1 && has_word_content(w)) {
      out_.terminator = std::string(1, last);
      --end;
      w.remove_suffix(1);
    }

    TokenKind kind;
    if (w == "xxx" || w == "yyy" || w == "www") {
      kind = TokenKind::Unintelligible;
    } else if (w.substr(0, 2) == "&=") {
      kind = TokenKind::NonSpeechEvent;
    } else if (w.front() == '&') {
      kind = TokenKind::Fragment;
    } else if (w.front() == '0' && w.size() > 1 && !(w[1] >= '0' && w[1] <= '9')) {
      other(TokenRange{n, n}, std::string(w));
      return;
    } else if (auto at = w.rfind('@'); at != std::string_view::npos && at > 0 &&
                                       w.substr(at + 1, 1) == "u") {
      kind = TokenKind::PhonologicalForm;
    } else if (has_word_content(w)) {
      kind = TokenKind::Word;
    } else {
      warn(begin, "unrecognized token '" + std::string(w) + "'");
      other(TokenRange{n, n}, std::string(w));
      return;
    }
    out_.tokens.push_back(Token{std::string(w), kind, std::nullopt, ByteSpan{begin, end}});
    last_scope_ = TokenRange{n, n + 1};
  }

  std::string_view text_;
  TierParse out_;
  std::vector<Group> groups_;
  std::optional<TokenRange> last_scope_;
};

inline std::string file_stem(std::string_view source_path) {
  return std::filesystem::path(std::string(source_path)).stem().string();
}

inline std::string pad5(std::size_t i) {
  std::string s = std::to_string(i);
  if (s.size() < 5) s.insert(0, 5 - s.size(), '0');
  return s;
}

}  // namespace detail

inline TierParse tokenize_main_tier(std::string_view tier_text) {
  return detail::TierTokenizer(tier_text).run();
}

/// Parses a whole .cha file. Throws Error{MalformedHeader | UnterminatedTier};
/// everything else that is not understood becomes a ParseWarning.
inline ChatDocument parse_document(std::string_view content, std::string_view source_path) {
  using detail::pad5;
  ChatDocument doc;
  doc.source_path = std::string(source_path);
  if (content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);

  struct PendingTier {
    std::string code;
    std::string text;
    std::size_t line;
  };
  struct IdLine {
    std::string code;
    std::size_t line;
  };
  enum class State { None, Header, Main, Dependent } state = State::None;

  std::vector<PendingTier> tiers;
  std::vector<std::vector<DependentTier>> deps;
  std::vector<IdLine> ids;
  std::size_t participants_line = 0;
  bool ended = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    if (ended) {
      doc.warnings.push_back({line_no, "content after @End ignored", Severity::Dropped});
      continue;
    }
    char c = line.front();
    if (c == '\t') {
      switch (state) {
        case State::Main:
          tiers.back().text += '\n';
          tiers.back().text += line;
          break;
        case State::Dependent:
          deps.back().back().text += ' ';
          deps.back().back().text += trim(line);
          break;
        case State::Header:
          doc.headers.back().second += ' ';
          doc.headers.back().second += trim(line);
          break;
        case State::None:
          doc.warnings.push_back({line_no, "continuation line without a tier", Severity::Dropped});
          break;
      }
    } else if (c == '@') {
      auto colon = line.find(':');
      std::string name(trim(line.substr(1, colon == std::string_view::npos ? std::string_view::npos : colon - 1)));
      std::string value(colon == std::string_view::npos ? std::string_view{} : trim(line.substr(colon + 1)));
      if (name == "End") ended = true;
      if (name == "Participants") {
        participants_line = participants_line ? participants_line : line_no;
        std::string_view rest = value;
        while (!rest.empty()) {
          auto comma = rest.find(',');
          auto entry = split_ws(rest.substr(0, comma));
          if (!entry.empty() && !doc.has_participant(entry.front()))
            doc.participants.push_back({entry.front(), entry.size() > 1 ? entry.back() : std::string{}});
          rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
      } else if (name == "ID") {
        std::vector<std::string> fields;
        std::string_view rest = value;
        while (true) {
          auto bar = rest.find('|');
          fields.emplace_back(trim(rest.substr(0, bar)));
          if (bar == std::string_view::npos) break;
          rest = rest.substr(bar + 1);
        }
        if (fields.size() < 3 || fields[2].empty())
          throw Error(ErrorCode::MalformedHeader, "malformed @ID header at line " + std::to_string(line_no), line_no);
        ids.push_back({fields[2], line_no});
      } else if (name == "Media") {
        auto comma = value.find(',');
        doc.media = std::string(trim(std::string_view(value).substr(0, comma)));
      }
      doc.headers.emplace_back(std::move(name), std::move(value));
      state = State::Header;
    } else if (c == '*') {
      auto colon = line.find(':');
      if (colon == std::string_view::npos || colon == 1) {
        doc.warnings.push_back({line_no, "malformed main tier", Severity::Dropped});
        state = State::None;
        continue;
      }
      auto payload = line.substr(colon + 1);
      while (!payload.empty() && (payload.front() == '\t' || payload.front() == ' ')) payload.remove_prefix(1);
      tiers.push_back({std::string(line.substr(1, colon - 1)), std::string(payload), line_no});
      deps.emplace_back();
      state = State::Main;
    } else if (c == '%') {
      if (tiers.empty()) {
        doc.warnings.push_back({line_no, "dependent tier before any main tier", Severity::Dropped});
        state = State::None;
        continue;
      }
      auto colon = line.find(':');
      std::string name(line.substr(1, colon == std::string_view::npos ? std::string_view::npos : colon - 1));
      std::string text(colon == std::string_view::npos ? std::string_view{} : trim(line.substr(colon + 1)));
      deps.back().push_back({std::move(name), std::move(text)});
      state = State::Dependent;
    } else {
      doc.warnings.push_back({line_no, "unrecognized line", Severity::Dropped});
      state = State::None;
    }
  }

  // Header consistency.
  if (!tiers.empty() && doc.participants.empty())
    throw Error(ErrorCode::MalformedHeader,
                "missing @Participants header (first main tier at line " + std::to_string(tiers.front().line) + ")",
                tiers.front().line);
  for (const auto& id : ids) {
    if (!doc.has_participant(id.code))
      throw Error(ErrorCode::MalformedHeader,
                  "@ID for undeclared participant " + id.code + " at line " + std::to_string(id.line), id.line);
  }
  for (const auto& p : doc.participants) {
    bool found = std::any_of(ids.begin(), ids.end(), [&](const IdLine& id) { return id.code == p.code; });
    if (!found)
      doc.warnings.push_back({participants_line, "participant " + p.code + " has no @ID header", Severity::Recoverable});
  }

  const std::string stem = detail::file_stem(source_path);
  doc.utterances.reserve(tiers.size());
  for (std::size_t i = 0; i < tiers.size(); ++i) {
    auto& t = tiers[i];
    if (!doc.has_participant(t.code))
      throw Error(ErrorCode::MalformedHeader,
                  "speaker " + t.code + " at line " + std::to_string(t.line) + " is not in @Participants", t.line);

    TierParse tp = tokenize_main_tier(t.text);
    for (auto& w : tp.warnings) {
      w.line_no += t.line - 1;
      doc.warnings.push_back(std::move(w));
    }
    if (tp.terminator.empty()) {
      if (i + 1 == tiers.size() && !ended)
        throw Error(ErrorCode::UnterminatedTier,
                    "end of file inside the tier starting at line " + std::to_string(t.line), t.line);
      doc.warnings.push_back({t.line, "main tier has no terminator", Severity::Recoverable});
    }

    Utterance u;
    u.utt_id = stem + "_" + pad5(i);
    u.speaker_code = t.code;
    u.tokens = std::move(tp.tokens);
    u.annotations = std::move(tp.annotations);
    u.terminator = std::move(tp.terminator);
    u.raw_text = std::move(t.text);
    u.dependent_tiers = std::move(deps[i]);
    u.line_no = t.line;
    if (!tp.bullets.empty()) {
      TimeAlignment a{tp.bullets.front().start_ms, tp.bullets.back().end_ms};
      if (tp.bullets.size() > 1)
        doc.warnings.push_back({t.line, "multiple time bullets merged", Severity::Recoverable});
      if (a.start_ms <= a.end_ms) {
        u.alignment = a;
      } else {
        doc.warnings.push_back({t.line, "time bullet with start after end ignored", Severity::Recoverable});
      }
    }
    doc.utterances.push_back(std::move(u));
  }
  return doc;
}

// --- JSON -------------------------------------------------------------------

constexpr std::string_view to_string(TokenKind k) {
  switch (k) {
    case TokenKind::Word: return "Word";
    case TokenKind::Fragment: return "Fragment";
    case TokenKind::Unintelligible: return "Unintelligible";
    case TokenKind::NonSpeechEvent: return "NonSpeechEvent";
    case TokenKind::PhonologicalForm: return "PhonologicalForm";
  }
  return "?";
}

constexpr std::string_view to_string(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::Retrace: return "Retrace";
    case AnnotationKind::Repetition: return "Repetition";
    case AnnotationKind::ErrorCode: return "ErrorCode";
    case AnnotationKind::ReplacementLink: return "ReplacementLink";
    case AnnotationKind::Other: return "Other";
  }
  return "?";
}

constexpr std::string_view to_string(ErrorClass k) {
  switch (k) {
    case ErrorClass::Pronunciation: return "Pronunciation";
    case ErrorClass::Semantic: return "Semantic";
    case ErrorClass::OtherError: return "OtherError";
  }
  return "?";
}

constexpr std::string_view to_string(Severity s) {
  return s == Severity::Recoverable ? "Recoverable" : "Dropped";
}

inline nlohmann::ordered_json to_json(const TimeAlignment& a) {
  return {{"start_ms", a.start_ms}, {"end_ms", a.end_ms}};
}

inline nlohmann::ordered_json to_json(const Utterance& u) {
  using nlohmann::ordered_json;
  ordered_json tokens = ordered_json::array();
  for (const auto& t : u.tokens) {
    ordered_json j{{"surface", t.surface}, {"kind", to_string(t.kind)}};
    j["replacement"] = t.replacement ? ordered_json(*t.replacement) : ordered_json(nullptr);
    j["span"] = {t.span.begin, t.span.end};
    tokens.push_back(std::move(j));
  }
  ordered_json anns = ordered_json::array();
  for (const auto& a : u.annotations) {
    ordered_json j{{"kind", to_string(a.kind)}};
    j["error_class"] = a.error_class ? ordered_json(to_string(*a.error_class)) : ordered_json(nullptr);
    j["scope"] = {a.scope.begin, a.scope.end};
    j["raw_marker"] = a.raw_marker;
    j["payload"] = a.payload;
    anns.push_back(std::move(j));
  }
  ordered_json deps = ordered_json::array();
  for (const auto& d : u.dependent_tiers) deps.push_back({{"tier", d.name}, {"text", d.text}});
  ordered_json j{{"utt_id", u.utt_id}, {"speaker_code", u.speaker_code}, {"line", u.line_no}};
  j["alignment"] = u.alignment ? to_json(*u.alignment) : ordered_json(nullptr);
  j["terminator"] = u.terminator;
  j["raw_text"] = u.raw_text;
  j["tokens"] = std::move(tokens);
  j["annotations"] = std::move(anns);
  j["dependent_tiers"] = std::move(deps);
  return j;
}

inline nlohmann::ordered_json to_json(const ChatDocument& d) {
  using nlohmann::ordered_json;
  ordered_json parts = ordered_json::array();
  for (const auto& p : d.participants) parts.push_back({{"code", p.code}, {"role", p.role}});
  ordered_json utts = ordered_json::array();
  for (const auto& u : d.utterances) utts.push_back(to_json(u));
  ordered_json warns = ordered_json::array();
  for (const auto& w : d.warnings)
    warns.push_back({{"line", w.line_no}, {"severity", to_string(w.severity)}, {"message", w.message}});
  ordered_json j{{"v", 1}, {"source_path", d.source_path}, {"participants", std::move(parts)}};
  j["media"] = d.media ? ordered_json(*d.media) : ordered_json(nullptr);
  j["utterances"] = std::move(utts);
  j["warnings"] = std::move(warns);
  return j;
}

}  // namespace adaptbench::chat
