#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fdreward/response_parser.hpp"
#include "fdreward/taxonomy.hpp"

namespace fdreward {

enum class Preference { AWins, BWins, Tie };

// Which frame of a pair a rollout belongs to.
enum class Side { A = 0, B = 1 };

std::string_view to_string(Preference p);        // "A" | "B" | "TIE"
Preference parse_preference(std::string_view s);  // throws std::invalid_argument
inline Preference mirrored(Preference p) {
  return p == Preference::AWins ? Preference::BWins : p == Preference::BWins ? Preference::AWins : Preference::Tie;
}

class InvalidTheta : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
struct PreferenceProbabilitiesT {
  Scalar p_win;
  Scalar p_lose;
  Scalar p_tie;

  Scalar sum() const { return p_win + p_lose + p_tie; }
};
using PreferenceProbabilities = PreferenceProbabilitiesT<double>;

// Rao-Kupper tie model on point-wise scores. Exponentials are taken after
// shifting both scores by their maximum, and every product/sum is written so
// that swapping (s_a, s_b) swaps p_win and p_lose bit-for-bit.
template <typename Scalar>
PreferenceProbabilitiesT<Scalar> preference_probabilities(Scalar s_a, Scalar s_b, Scalar theta) {
  if (!(theta > Scalar(1))) throw InvalidTheta("theta must be > 1");
  using std::exp;
  const Scalar m = std::max(s_a, s_b);
  const Scalar ea = exp(s_a - m);
  const Scalar eb = exp(s_b - m);
  const Scalar win_den = ea + theta * eb;
  const Scalar lose_den = theta * ea + eb;
  PreferenceProbabilitiesT<Scalar> p;
  p.p_win = ea / win_den;
  p.p_lose = eb / lose_den;
  p.p_tie = (theta * theta - Scalar(1)) * (ea * eb) / (win_den * lose_den);
  return p;
}

template <typename Scalar>
Scalar preference_reward(const PreferenceProbabilitiesT<Scalar>& probs, Preference gt) {
  using std::log;
  switch (gt) {
    case Preference::AWins: return log(probs.p_win);
    case Preference::BWins: return log(probs.p_lose);
    case Preference::Tie: return log(probs.p_tie);
  }
  return Scalar(0);
}

struct AttributionBreakdown {
  int a_right = 0;
  int a_wrong = 0;
  int a_missing = 0;
  friend bool operator==(const AttributionBreakdown&, const AttributionBreakdown&) = default;
};

// Set comparison over distortion labels; a clean prediction on a clean frame
// counts as one right label.
AttributionBreakdown attribution_breakdown(const LabelSet& pred, const LabelSet& gt);

inline double attribution_reward(const AttributionBreakdown& b) {
  return 0.6 * b.a_right - 0.2 * (b.a_wrong + b.a_missing);
}

struct RewardWeights {
  double lambda_fmt = 1.0;
  double lambda_attr = 1.0;
  double lambda_pref = 1.0;
  double theta = 5.0;

  void validate() const;
};

inline double format_reward(const ParsedResponse& parsed) { return parsed.format_ok ? 1.0 : 0.0; }

inline double composite_reward(double fmt, double attr, double pref, const RewardWeights& w) {
  return w.lambda_fmt * fmt + w.lambda_attr * attr + w.lambda_pref * pref;
}

struct PairReward {
  ParsedResponse parsed_a;
  ParsedResponse parsed_b;
  double score_a = 0;
  double score_b = 0;
  double r_fmt_a = 0;
  double r_attr_a = 0;
  double r_fmt_b = 0;
  double r_attr_b = 0;
  // Shared by both rollouts of the index-matched pair.
  double r_pref = 0;
  double reward_a = 0;
  double reward_b = 0;
};

// Parses both rollouts and assembles their composite rewards. Missing ratings
// fall back to `score_fallback`. Never throws on malformed text.
PairReward score_rollout_pair(std::string_view text_a, std::string_view text_b, const LabelSet& gt_a,
                              const LabelSet& gt_b, Preference gt_pref, const RewardWeights& w,
                              double score_fallback = 1.0);

}  // namespace fdreward
