#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdreward/reward.hpp"
#include "fdreward/taxonomy.hpp"

namespace fdreward {

class GroupTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SupportMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyMask : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GrpoConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double std_floor = 1e-6;
  double learning_rate = 100.0;
  int steps = 300;
  std::uint64_t seed = 42;

  void validate() const;
};

// Standardizes rewards within one group using the population standard
// deviation, floored at `std_floor`.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor = 1e-6);

inline double clipped_term(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

// KL(p || q) for categorical distributions; 0 * log(0 / q) contributes 0.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar categorical_kl(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) throw SupportMismatch("distributions have different lengths");
  Scalar kl(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p.derived().coeff(i);
    if (pi == Scalar(0)) continue;
    const Scalar qi = q.derived().coeff(i);
    if (!(qi > Scalar(0))) throw SupportMismatch("q has zero mass where p is positive");
    kl += pi * std::log(pi / qi);
  }
  return kl;
}

// Row-wise softmax and log-softmax of a logit matrix.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits);

struct ToyAction {
  std::size_t score_bin;
  LabelSet labels;
};

// Cartesian product of score bins and label subsets.
class ActionSpace {
 public:
  ActionSpace(std::vector<double> score_bins, std::vector<LabelSet> label_sets);

  // Scores 1.00, 1.25, ..., 5.00 and every valid label set of size <= 2.
  static std::shared_ptr<const ActionSpace> standard();

  std::size_t size() const { return actions_.size(); }
  const ToyAction& operator[](std::size_t i) const { return actions_[i]; }
  double score(std::size_t action) const { return score_bins_[actions_[action].score_bin]; }
  const std::vector<double>& score_bins() const { return score_bins_; }
  const std::vector<LabelSet>& label_sets() const { return label_sets_; }
  std::size_t label_set_index(std::size_t action) const { return action % label_sets_.size(); }

 private:
  std::vector<double> score_bins_;
  std::vector<LabelSet> label_sets_;
  std::vector<ToyAction> actions_;
};

// Tabular softmax policy. One row of logits per query; a pair context with
// id k owns rows 2k (frame A) and 2k + 1 (frame B).
class ToyPolicy {
 public:
  ToyPolicy(std::shared_ptr<const ActionSpace> space, std::size_t num_queries);

  static std::size_t query_row(std::size_t context_id, Side side) {
    return 2 * context_id + static_cast<std::size_t>(side);
  }

  const ActionSpace& space() const { return *space_; }
  std::shared_ptr<const ActionSpace> space_ptr() const { return space_; }
  std::size_t num_queries() const { return static_cast<std::size_t>(logits_.rows()); }
  std::size_t num_actions() const { return static_cast<std::size_t>(logits_.cols()); }

  Eigen::MatrixXd& logits() { return logits_; }
  const Eigen::MatrixXd& logits() const { return logits_; }
  Eigen::VectorXd probs(std::size_t row) const;
  Eigen::MatrixXd probs() const { return softmax_rows(logits_); }

  // Expected score under row `row`.
  double expected_score(std::size_t row) const;

 private:
  std::shared_ptr<const ActionSpace> space_;
  Eigen::MatrixXd logits_;
};

struct PairContext {
  std::size_t context_id = 0;
  std::string pair_id;
  std::string prompt;
  std::string frame_ref_a;
  std::string frame_ref_b;
  LabelSet gt_labels_a;
  LabelSet gt_labels_b;
  Preference gt_pref = Preference::Tie;
};

// One (pair, side) group of rollouts sampled from the old policy.
struct RolloutGroup {
  std::string pair_id;
  Side side = Side::A;
  std::size_t query = 0;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

double grpo_objective(const ToyPolicy& policy, const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                      std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

// Analytic gradient of grpo_objective with respect to policy.logits().
Eigen::MatrixXd grpo_gradient(const ToyPolicy& policy, const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                              std::span<const RolloutGroup> groups, const GrpoConfig& cfg);

// Draws one action per uniform variate from a categorical distribution.
std::size_t sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, double u);

std::string render_toy_response(const ActionSpace& space, std::size_t action);

struct ToyRollout {
  std::vector<std::size_t> actions_a;
  std::vector<std::size_t> actions_b;
  std::vector<std::string> texts_a;
  std::vector<std::string> texts_b;
};

ToyRollout rollout_toy(const ToyPolicy& policy, const PairContext& ctx, int group_size, std::uint64_t seed);

struct StepStats {
  int step = 0;
  double mean_reward = 0;
  double mean_kl = 0;
  double objective = 0;
  double score_gap = 0;
};

struct TrainResult {
  ToyPolicy policy;
  ToyPolicy reference;
  std::vector<StepStats> stats;
};

// Exact expectation of the composite reward under `policy`, averaged over both
// sides of every context.
double expected_reward(const ToyPolicy& policy, std::span<const PairContext> contexts, const RewardWeights& w);
// Mean over contexts of E[s_a] - E[s_b].
double expected_score_gap(const ToyPolicy& policy, std::span<const PairContext> contexts);
// Mean KL(policy || reference) over the query rows of every context.
double mean_kl(const ToyPolicy& policy, const ToyPolicy& reference, std::span<const PairContext> contexts);

// Runs GRPO on the toy policy starting from uniform logits, which also serve
// as the frozen reference policy.
TrainResult grpo_train(std::span<const PairContext> contexts, const GrpoConfig& cfg, const RewardWeights& w);
TrainResult grpo_train(std::span<const PairContext> contexts, const GrpoConfig& cfg, const RewardWeights& w,
                       ToyPolicy initial);

// `n` contexts where frame A is always preferred; ground-truth labels are
// fixed per context and drawn deterministically from `seed`.
std::vector<PairContext> always_a_wins_contexts(std::size_t n, std::uint64_t seed);

// Negative mean log-probability over positions with mask == true.
double masked_nll(std::span<const double> token_logprobs, const std::vector<bool>& loss_mask);

}  // namespace fdreward
