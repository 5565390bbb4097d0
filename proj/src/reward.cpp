#include "fdreward/reward.hpp"

#include <bit>

namespace fdreward {

std::string_view to_string(Preference p) {
  switch (p) {
    case Preference::AWins: return "A";
    case Preference::BWins: return "B";
    case Preference::Tie: return "TIE";
  }
  return "?";
}

Preference parse_preference(std::string_view s) {
  if (s == "A") return Preference::AWins;
  if (s == "B") return Preference::BWins;
  if (s == "TIE") return Preference::Tie;
  throw std::invalid_argument("preference must be \"A\", \"B\" or \"TIE\", got \"" + std::string(s) + "\"");
}

AttributionBreakdown attribution_breakdown(const LabelSet& pred, const LabelSet& gt) {
  const auto p = pred.distortion_mask();
  const auto g = gt.distortion_mask();
  if (p == 0 && g == 0) return {1, 0, 0};
  AttributionBreakdown b;
  b.a_right = std::popcount(static_cast<unsigned>(p & g));
  b.a_wrong = std::popcount(static_cast<unsigned>(p & ~g & 0x1FFu));
  b.a_missing = std::popcount(static_cast<unsigned>(g & ~p & 0x1FFu));
  return b;
}

void RewardWeights::validate() const {
  if (!(lambda_fmt >= 0) || !(lambda_attr >= 0) || !(lambda_pref >= 0)) {
    throw std::invalid_argument("reward weights must be non-negative");
  }
  if (!(theta > 1.0) || !std::isfinite(theta)) throw InvalidTheta("theta must be a finite value > 1");
}

PairReward score_rollout_pair(std::string_view text_a, std::string_view text_b, const LabelSet& gt_a,
                              const LabelSet& gt_b, Preference gt_pref, const RewardWeights& w,
                              double score_fallback) {
  PairReward r;
  r.parsed_a = parse_answer(text_a);
  r.parsed_b = parse_answer(text_b);
  r.score_a = effective_score(r.parsed_a, score_fallback);
  r.score_b = effective_score(r.parsed_b, score_fallback);
  r.r_fmt_a = format_reward(r.parsed_a);
  r.r_fmt_b = format_reward(r.parsed_b);
  r.r_attr_a = attribution_reward(attribution_breakdown(r.parsed_a.labels, gt_a));
  r.r_attr_b = attribution_reward(attribution_breakdown(r.parsed_b.labels, gt_b));
  const auto probs = preference_probabilities(r.score_a, r.score_b, w.theta);
  r.r_pref = preference_reward(probs, gt_pref);
  r.reward_a = composite_reward(r.r_fmt_a, r.r_attr_a, r.r_pref, w);
  r.reward_b = composite_reward(r.r_fmt_b, r.r_attr_b, r.r_pref, w);
  return r;
}

}  // namespace fdreward
