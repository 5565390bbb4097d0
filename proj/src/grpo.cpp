#include "fdreward/grpo.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fdreward/random.hpp"
#include "fdreward/response_parser.hpp"

namespace fdreward {

void GrpoConfig::validate() const {
  if (group_size < 2) throw GroupTooSmall("group_size must be >= 2");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("clip_eps must lie in (0, 1)");
  if (!(kl_beta >= 0.0)) throw std::invalid_argument("kl_beta must be >= 0");
  if (!(std_floor > 0.0)) throw std::invalid_argument("std_floor must be > 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw GroupTooSmall("advantage normalization needs at least two rewards");
  if (!(std_floor > 0.0)) throw std::invalid_argument("std_floor must be > 0");
  const Eigen::Map<const Eigen::VectorXd> r(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
  const double mean = r.mean();
  const Eigen::VectorXd centered = r.array() - mean;
  const double std = std::sqrt(centered.squaredNorm() / static_cast<double>(r.size()));
  const double denom = std::max(std, std_floor);
  std::vector<double> out(rewards.size());
  Eigen::Map<Eigen::VectorXd>(out.data(), r.size()) = centered / denom;
  return out;
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) { return log_softmax_rows(logits).array().exp(); }

// ActionSpace

ActionSpace::ActionSpace(std::vector<double> score_bins, std::vector<LabelSet> label_sets)
    : score_bins_(std::move(score_bins)), label_sets_(std::move(label_sets)) {
  if (score_bins_.empty() || label_sets_.empty()) throw std::invalid_argument("empty action space");
  actions_.reserve(score_bins_.size() * label_sets_.size());
  for (std::size_t s = 0; s < score_bins_.size(); ++s) {
    for (const auto& ls : label_sets_) actions_.push_back({s, ls});
  }
}

std::shared_ptr<const ActionSpace> ActionSpace::standard() {
  static const auto space = [] {
    std::vector<double> bins;
    for (int k = 0; k <= 16; ++k) bins.push_back(1.0 + 0.25 * k);
    std::vector<LabelSet> sets;
    for (LabelSet::Mask mask = 0; mask < (1u << kNumLabels); ++mask) {
      if (std::popcount(mask) <= 2 && LabelSet::valid_mask(mask, LabelRole::Prediction)) {
        sets.push_back(LabelSet::from_mask(mask, LabelRole::Prediction));
      }
    }
    return std::make_shared<const ActionSpace>(std::move(bins), std::move(sets));
  }();
  return space;
}

// ToyPolicy

ToyPolicy::ToyPolicy(std::shared_ptr<const ActionSpace> space, std::size_t num_queries)
    : space_(std::move(space)),
      logits_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(num_queries),
                                    static_cast<Eigen::Index>(space_->size()))) {}

Eigen::VectorXd ToyPolicy::probs(std::size_t row) const {
  const auto r = logits_.row(static_cast<Eigen::Index>(row));
  const double m = r.maxCoeff();
  Eigen::VectorXd e = (r.array() - m).exp().transpose();
  return e / e.sum();
}

double ToyPolicy::expected_score(std::size_t row) const {
  const Eigen::VectorXd p = probs(row);
  double s = 0;
  for (std::size_t a = 0; a < num_actions(); ++a) s += p[static_cast<Eigen::Index>(a)] * space_->score(a);
  return s;
}

// Objective and gradient

namespace {

void check_compatible(const ToyPolicy& a, const ToyPolicy& b) {
  if (a.num_queries() != b.num_queries() || a.num_actions() != b.num_actions()) {
    throw SupportMismatch("policies have different shapes");
  }
}

}  // namespace

double grpo_objective(const ToyPolicy& policy, const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                      std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  check_compatible(policy, old_policy);
  check_compatible(policy, ref_policy);
  if (groups.empty()) return 0.0;
  const Eigen::MatrixXd logp = log_softmax_rows(policy.logits());
  const Eigen::MatrixXd logp_old = log_softmax_rows(old_policy.logits());
  const Eigen::MatrixXd p = logp.array().exp();
  const Eigen::MatrixXd p_ref = softmax_rows(ref_policy.logits());

  double total = 0;
  for (const auto& g : groups) {
    if (g.actions.size() != g.advantages.size() || g.actions.empty()) {
      throw std::invalid_argument("group actions and advantages must be non-empty and aligned");
    }
    const auto q = static_cast<Eigen::Index>(g.query);
    double surrogate = 0;
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
      const auto a = static_cast<Eigen::Index>(g.actions[i]);
      const double ratio = std::exp(logp(q, a) - logp_old(q, a));
      surrogate += clipped_term(ratio, g.advantages[i], cfg.clip_eps);
    }
    surrogate /= static_cast<double>(g.actions.size());
    const double kl = cfg.kl_beta != 0.0 ? categorical_kl(p.row(q).transpose(), p_ref.row(q).transpose()) : 0.0;
    total += surrogate - cfg.kl_beta * kl;
  }
  return total / static_cast<double>(groups.size());
}

Eigen::MatrixXd grpo_gradient(const ToyPolicy& policy, const ToyPolicy& old_policy, const ToyPolicy& ref_policy,
                              std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  check_compatible(policy, old_policy);
  check_compatible(policy, ref_policy);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.logits().rows(), policy.logits().cols());
  if (groups.empty()) return grad;
  const Eigen::MatrixXd logp = log_softmax_rows(policy.logits());
  const Eigen::MatrixXd logp_old = log_softmax_rows(old_policy.logits());
  const Eigen::MatrixXd logp_ref = log_softmax_rows(ref_policy.logits());
  const Eigen::MatrixXd p = logp.array().exp();
  const double scale = 1.0 / static_cast<double>(groups.size());

  for (const auto& g : groups) {
    const auto q = static_cast<Eigen::Index>(g.query);
    const double per_rollout = scale / static_cast<double>(g.actions.size());
    // d ratio / d z = ratio * (onehot(a) - p); the clipped branch has zero slope.
    double mass = 0;
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
      const auto a = static_cast<Eigen::Index>(g.actions[i]);
      const double ratio = std::exp(logp(q, a) - logp_old(q, a));
      const double adv = g.advantages[i];
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
      if (ratio * adv > clipped * adv) continue;
      const double c = per_rollout * adv * ratio;
      grad(q, a) += c;
      mass += c;
    }
    grad.row(q) -= mass * p.row(q);

    if (cfg.kl_beta != 0.0) {
      // d KL / d z_j = p_j (log p_j - log r_j - KL)
      const Eigen::ArrayXd log_ratio = (logp.row(q) - logp_ref.row(q)).transpose().array();
      const Eigen::ArrayXd pq = p.row(q).transpose().array();
      const double kl = (pq * log_ratio).sum();
      grad.row(q) -= (scale * cfg.kl_beta * (pq * (log_ratio - kl))).matrix().transpose();
    }
  }
  return grad;
}

// Sampling

std::size_t sample_categorical(const Eigen::Ref<const Eigen::VectorXd>& probs, double u) {
  double acc = 0;
  const auto n = static_cast<std::size_t>(probs.size());
  for (std::size_t i = 0; i < n; ++i) {
    acc += probs[static_cast<Eigen::Index>(i)];
    if (u < acc) return i;
  }
  // Round-off can leave acc slightly below 1; return the last supported action.
  for (std::size_t i = n; i-- > 0;) {
    if (probs[static_cast<Eigen::Index>(i)] > 0) return i;
  }
  return n - 1;
}

std::string render_toy_response(const ActionSpace& space, std::size_t action) {
  const auto& act = space[action];
  const double score = space.score(action);
  char think[128];
  std::snprintf(think, sizeof(think), "Inspected the frame; found %zu issue(s); rating %.2f.",
                act.labels.distortion_count(), score);
  return render_response(think, act.labels, score);
}

ToyRollout rollout_toy(const ToyPolicy& policy, const PairContext& ctx, int group_size, std::uint64_t seed) {
  if (group_size < 2) throw GroupTooSmall("group_size must be >= 2");
  const auto row_a = ToyPolicy::query_row(ctx.context_id, Side::A);
  const auto row_b = ToyPolicy::query_row(ctx.context_id, Side::B);
  if (row_b >= policy.num_queries()) throw std::out_of_range("context id outside the policy table");
  const Eigen::VectorXd pa = policy.probs(row_a);
  const Eigen::VectorXd pb = policy.probs(row_b);
  Rng rng(seed);
  ToyRollout out;
  for (int i = 0; i < group_size; ++i) {
    out.actions_a.push_back(sample_categorical(pa, unit_open(rng())));
    out.actions_b.push_back(sample_categorical(pb, unit_open(rng())));
  }
  for (std::size_t i = 0; i < out.actions_a.size(); ++i) {
    out.texts_a.push_back(render_toy_response(policy.space(), out.actions_a[i]));
    out.texts_b.push_back(render_toy_response(policy.space(), out.actions_b[i]));
  }
  return out;
}

// Exact statistics

namespace {

// Marginal distribution over score bins for one policy row.
Eigen::VectorXd score_marginal(const ActionSpace& space, const Eigen::VectorXd& p) {
  const std::size_t n_labels = space.label_sets().size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.score_bins().size()));
  for (std::size_t a = 0; a < space.size(); ++a) m[static_cast<Eigen::Index>(a / n_labels)] += p[static_cast<Eigen::Index>(a)];
  return m;
}

Eigen::VectorXd label_marginal(const ActionSpace& space, const Eigen::VectorXd& p) {
  const std::size_t n_labels = space.label_sets().size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_labels));
  for (std::size_t a = 0; a < space.size(); ++a) m[static_cast<Eigen::Index>(a % n_labels)] += p[static_cast<Eigen::Index>(a)];
  return m;
}

double expected_attr(const ActionSpace& space, const Eigen::VectorXd& label_p, const LabelSet& gt) {
  double e = 0;
  for (std::size_t l = 0; l < space.label_sets().size(); ++l) {
    e += label_p[static_cast<Eigen::Index>(l)] * attribution_reward(attribution_breakdown(space.label_sets()[l], gt));
  }
  return e;
}

}  // namespace

double expected_reward(const ToyPolicy& policy, std::span<const PairContext> contexts, const RewardWeights& w) {
  if (contexts.empty()) return 0.0;
  const auto& space = policy.space();
  const auto& bins = space.score_bins();
  const auto nb = static_cast<Eigen::Index>(bins.size());
  double total = 0;
  for (const auto& ctx : contexts) {
    const Eigen::VectorXd pa = policy.probs(ToyPolicy::query_row(ctx.context_id, Side::A));
    const Eigen::VectorXd pb = policy.probs(ToyPolicy::query_row(ctx.context_id, Side::B));
    const Eigen::VectorXd sa = score_marginal(space, pa);
    const Eigen::VectorXd sb = score_marginal(space, pb);
    Eigen::MatrixXd pref(nb, nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
      for (Eigen::Index j = 0; j < nb; ++j) {
        pref(i, j) = preference_reward(preference_probabilities(bins[i], bins[j], w.theta), ctx.gt_pref);
      }
    }
    const double e_pref = sa.dot(pref * sb);
    // Toy rollouts are always well formed, so the format term is 1.
    const double e_a = composite_reward(1.0, expected_attr(space, label_marginal(space, pa), ctx.gt_labels_a), e_pref, w);
    const double e_b = composite_reward(1.0, expected_attr(space, label_marginal(space, pb), ctx.gt_labels_b), e_pref, w);
    total += 0.5 * (e_a + e_b);
  }
  return total / static_cast<double>(contexts.size());
}

double expected_score_gap(const ToyPolicy& policy, std::span<const PairContext> contexts) {
  if (contexts.empty()) return 0.0;
  double total = 0;
  for (const auto& ctx : contexts) {
    total += policy.expected_score(ToyPolicy::query_row(ctx.context_id, Side::A)) -
             policy.expected_score(ToyPolicy::query_row(ctx.context_id, Side::B));
  }
  return total / static_cast<double>(contexts.size());
}

double mean_kl(const ToyPolicy& policy, const ToyPolicy& reference, std::span<const PairContext> contexts) {
  if (contexts.empty()) return 0.0;
  double total = 0;
  for (const auto& ctx : contexts) {
    for (Side side : {Side::A, Side::B}) {
      const auto row = ToyPolicy::query_row(ctx.context_id, side);
      total += categorical_kl(policy.probs(row), reference.probs(row));
    }
  }
  return total / static_cast<double>(2 * contexts.size());
}

// Training

TrainResult grpo_train(std::span<const PairContext> contexts, const GrpoConfig& cfg, const RewardWeights& w) {
  std::size_t rows = 0;
  for (const auto& ctx : contexts) rows = std::max(rows, ToyPolicy::query_row(ctx.context_id, Side::B) + 1);
  return grpo_train(contexts, cfg, w, ToyPolicy(ActionSpace::standard(), rows));
}

TrainResult grpo_train(std::span<const PairContext> contexts, const GrpoConfig& cfg, const RewardWeights& w,
                       ToyPolicy initial) {
  if (contexts.empty()) throw std::invalid_argument("grpo_train needs at least one context");
  cfg.validate();
  w.validate();
  TrainResult result{initial, initial, {}};
  ToyPolicy& policy = result.policy;
  const ToyPolicy& reference = result.reference;

  for (int step = 0; step < cfg.steps; ++step) {
    const ToyPolicy old_policy = policy;
    std::vector<RolloutGroup> groups;
    groups.reserve(2 * contexts.size());
    for (std::size_t k = 0; k < contexts.size(); ++k) {
      const auto& ctx = contexts[k];
      const auto seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(step) * contexts.size() + k);
      const ToyRollout roll = rollout_toy(old_policy, ctx, cfg.group_size, seed);
      RolloutGroup ga{ctx.pair_id, Side::A, ToyPolicy::query_row(ctx.context_id, Side::A), roll.actions_a, {}, {}};
      RolloutGroup gb{ctx.pair_id, Side::B, ToyPolicy::query_row(ctx.context_id, Side::B), roll.actions_b, {}, {}};
      for (std::size_t i = 0; i < roll.texts_a.size(); ++i) {
        const PairReward r = score_rollout_pair(roll.texts_a[i], roll.texts_b[i], ctx.gt_labels_a, ctx.gt_labels_b,
                                                ctx.gt_pref, w);
        ga.rewards.push_back(r.reward_a);
        gb.rewards.push_back(r.reward_b);
      }
      ga.advantages = group_advantages(ga.rewards, cfg.std_floor);
      gb.advantages = group_advantages(gb.rewards, cfg.std_floor);
      groups.push_back(std::move(ga));
      groups.push_back(std::move(gb));
    }

    if (cfg.learning_rate > 0.0) {
      policy.logits() += cfg.learning_rate * grpo_gradient(policy, old_policy, reference, groups, cfg);
    }

    StepStats s;
    s.step = step;
    s.objective = grpo_objective(policy, old_policy, reference, groups, cfg);
    s.mean_reward = expected_reward(policy, contexts, w);
    s.mean_kl = mean_kl(policy, reference, contexts);
    s.score_gap = expected_score_gap(policy, contexts);
    result.stats.push_back(s);
  }
  return result;
}

std::vector<PairContext> always_a_wins_contexts(std::size_t n, std::uint64_t seed) {
  std::vector<PairContext> out;
  out.reserve(n);
  Rng rng(mix_seed(seed, 0xC0FFEE));
  const auto pick_labels = [&](std::size_t count) {
    LabelSet::Mask mask = 0;
    while (static_cast<std::size_t>(std::popcount(mask)) < count) {
      mask |= LabelSet::bit(static_cast<DistortionLabel>(uniform_index(rng, kNumDistortionLabels)));
    }
    return LabelSet::from_mask(mask, LabelRole::GroundTruth);
  };
  for (std::size_t k = 0; k < n; ++k) {
    PairContext ctx;
    ctx.context_id = k;
    ctx.pair_id = "toy-" + std::to_string(k);
    ctx.prompt = "toy prompt " + std::to_string(k);
    ctx.frame_ref_a = "toy://" + std::to_string(k) + "/a";
    ctx.frame_ref_b = "toy://" + std::to_string(k) + "/b";
    const std::size_t na = uniform_index(rng, 2);      // 0 or 1 issues on the preferred frame
    const std::size_t nb = na + 1 + uniform_index(rng, 2);  // strictly more on the other
    ctx.gt_labels_a = pick_labels(na);
    ctx.gt_labels_b = pick_labels(nb);
    ctx.gt_pref = Preference::AWins;
    out.push_back(std::move(ctx));
  }
  return out;
}

double masked_nll(std::span<const double> token_logprobs, const std::vector<bool>& loss_mask) {
  if (token_logprobs.size() != loss_mask.size()) {
    throw std::invalid_argument("token_logprobs and loss_mask differ in length");
  }
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < token_logprobs.size(); ++i) {
    if (!loss_mask[i]) continue;
    sum += token_logprobs[i];
    ++n;
  }
  if (n == 0) throw EmptyMask("loss mask selects no positions");
  return -sum / static_cast<double>(n);
}

}  // namespace fdreward
