#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fdreward/taxonomy.hpp"

namespace fdreward {

struct Diagnostic {
  enum class Kind { UnknownLabel, MalformedAnswer, BadLabelEntry, BadRating, RatingOutOfRange, ConflictingLabels };
  Kind kind;
  std::string detail;

  std::string to_string() const;
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct ParsedResponse {
  std::optional<std::string> think;
  LabelSet labels;
  std::optional<double> rating;
  bool format_ok = false;
  std::vector<Diagnostic> diagnostics;

  bool has(Diagnostic::Kind kind) const;
};

// True iff the text holds exactly one <think>...</think> block followed
// (whitespace only in between) by exactly one <answer>...</answer> block whose
// body is a JSON object with an "Attribution labels" key.
bool check_format(std::string_view text);

// Never throws on untrusted input; problems are reported as diagnostics.
ParsedResponse parse_answer(std::string_view text);

// Rating clamped to [1, 5], or the fallback when absent.
double effective_score(const ParsedResponse& parsed, double fallback = 1.0);

// Renders the answer JSON object ({"Attribution labels": [...], "rating": x}).
// An empty label set is written as ["null"]; rating is omitted when absent.
std::string render_answer_json(const LabelSet& labels, std::optional<double> rating);

// Full <think>...</think><answer>...</answer> response text.
std::string render_response(std::string_view think, const LabelSet& labels, std::optional<double> rating);

}  // namespace fdreward
