#include "fdreward/response_parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "json.hpp"

namespace fdreward {

namespace {

using nlohmann::json;

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kLabelsKey = "Attribution labels";
constexpr std::string_view kRatingKey = "rating";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

// Content between the first open tag and the first close tag after it.
std::optional<std::string_view> block_body(std::string_view text, std::string_view open, std::string_view close,
                                           std::size_t* end_out = nullptr, std::size_t* begin_out = nullptr) {
  const auto o = text.find(open);
  if (o == std::string_view::npos) return std::nullopt;
  const auto body_begin = o + open.size();
  const auto c = text.find(close, body_begin);
  if (c == std::string_view::npos) return std::nullopt;
  if (end_out) *end_out = c + close.size();
  if (begin_out) *begin_out = o;
  return text.substr(body_begin, c - body_begin);
}

struct Structure {
  std::optional<std::string_view> think;
  std::optional<std::string_view> answer;
  bool tags_ok = false;
};

Structure scan(std::string_view text) {
  Structure s;
  const bool single_tags = count_occurrences(text, kThinkOpen) == 1 && count_occurrences(text, kThinkClose) == 1 &&
                           count_occurrences(text, kAnswerOpen) == 1 && count_occurrences(text, kAnswerClose) == 1;
  std::size_t think_end = 0;
  std::size_t answer_begin = 0;
  if (count_occurrences(text, kThinkOpen) == 1 && count_occurrences(text, kThinkClose) == 1) {
    s.think = block_body(text, kThinkOpen, kThinkClose, &think_end);
  }
  s.answer = block_body(text, kAnswerOpen, kAnswerClose, nullptr, &answer_begin);
  if (single_tags && s.think && s.answer && answer_begin >= think_end) {
    s.tags_ok = is_blank(text.substr(think_end, answer_begin - think_end));
  }
  return s;
}

bool is_null_literal(std::string_view s) {
  if (s.size() != 4) return false;
  for (std::size_t i = 0; i < 4; ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != "null"[i]) return false;
  }
  return true;
}

}  // namespace

std::string Diagnostic::to_string() const {
  switch (kind) {
    case Kind::UnknownLabel: return "UnknownLabel(" + detail + ")";
    case Kind::MalformedAnswer: return "MalformedAnswer(" + detail + ")";
    case Kind::BadLabelEntry: return "BadLabelEntry(" + detail + ")";
    case Kind::BadRating: return "BadRating(" + detail + ")";
    case Kind::RatingOutOfRange: return "RatingOutOfRange(" + detail + ")";
    case Kind::ConflictingLabels: return "ConflictingLabels(" + detail + ")";
  }
  return detail;
}

bool ParsedResponse::has(Diagnostic::Kind kind) const {
  return std::any_of(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) { return d.kind == kind; });
}

bool check_format(std::string_view text) { return parse_answer(text).format_ok; }

ParsedResponse parse_answer(std::string_view text) {
  ParsedResponse out;
  const Structure s = scan(text);
  if (s.think) out.think = std::string(*s.think);
  if (!s.answer) return out;

  json body = json::parse(s.answer->begin(), s.answer->end(), nullptr, /*allow_exceptions=*/false);
  if (body.is_discarded()) {
    out.diagnostics.push_back({Diagnostic::Kind::MalformedAnswer, "answer block is not valid JSON"});
    return out;
  }
  if (!body.is_object()) {
    out.diagnostics.push_back({Diagnostic::Kind::MalformedAnswer, "answer block is not a JSON object"});
    return out;
  }

  const auto labels_it = body.find(kLabelsKey);
  const bool has_labels_key = labels_it != body.end();
  if (!has_labels_key) {
    out.diagnostics.push_back({Diagnostic::Kind::MalformedAnswer, "missing \"Attribution labels\""});
  } else {
    std::vector<json> entries;
    if (labels_it->is_array()) {
      entries.assign(labels_it->begin(), labels_it->end());
    } else if (labels_it->is_string()) {
      entries.push_back(*labels_it);
    } else if (!labels_it->is_null()) {
      out.diagnostics.push_back({Diagnostic::Kind::BadLabelEntry, "\"Attribution labels\" is not a list"});
    }
    LabelSet::Mask mask = 0;
    for (const auto& entry : entries) {
      if (entry.is_null()) continue;
      if (!entry.is_string()) {
        out.diagnostics.push_back({Diagnostic::Kind::BadLabelEntry, entry.dump()});
        continue;
      }
      const auto& name = entry.get_ref<const std::string&>();
      if (is_null_literal(name)) continue;
      if (auto label = parse_label(name)) {
        mask |= LabelSet::bit(*label);
      } else {
        out.diagnostics.push_back({Diagnostic::Kind::UnknownLabel, name});
      }
    }
    const LabelSet::Mask no_issue = LabelSet::bit(DistortionLabel::NoIssue);
    if ((mask & no_issue) != 0 && (mask & ~no_issue) != 0) {
      out.diagnostics.push_back({Diagnostic::Kind::ConflictingLabels, "\"no issue\" listed alongside distortions"});
      mask &= static_cast<LabelSet::Mask>(~no_issue);
    }
    out.labels = LabelSet::from_mask(mask, LabelRole::Prediction);
  }

  if (const auto r = body.find(kRatingKey); r != body.end() && !r->is_null()) {
    if (r->is_number()) {
      const double value = r->get<double>();
      if (std::isfinite(value)) {
        out.rating = value;
        if (value < 1.0 || value > 5.0) {
          out.diagnostics.push_back({Diagnostic::Kind::RatingOutOfRange, r->dump()});
        }
      } else {
        out.diagnostics.push_back({Diagnostic::Kind::BadRating, "non-finite rating"});
      }
    } else {
      out.diagnostics.push_back({Diagnostic::Kind::BadRating, r->dump()});
    }
  }

  out.format_ok = s.tags_ok && has_labels_key;
  return out;
}

double effective_score(const ParsedResponse& parsed, double fallback) {
  if (!parsed.rating) return fallback;
  return std::clamp(*parsed.rating, 1.0, 5.0);
}

std::string render_answer_json(const LabelSet& labels, std::optional<double> rating) {
  json body = json::object();
  auto names = labels.to_strings();
  body[std::string(kLabelsKey)] = names.empty() ? json::array({"null"}) : json(names);
  if (rating) body[std::string(kRatingKey)] = *rating;
  return body.dump();
}

std::string render_response(std::string_view think, const LabelSet& labels, std::optional<double> rating) {
  std::string out;
  out.reserve(think.size() + 128);
  out.append(kThinkOpen).append(think).append(kThinkClose);
  out.append(kAnswerOpen).append(render_answer_json(labels, rating)).append(kAnswerClose);
  return out;
}

}  // namespace fdreward
