#include "doctest.h"

#include <cmath>
#include <random>

#include "fdreward/grpo.hpp"
#include "support/oracles.hpp"

using namespace fdreward;

namespace {

double population_std(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("group advantage examples") {
  const auto a = group_advantages(std::vector<double>{1, 2, 3});
  const double z = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(a[0] == doctest::Approx(-z).epsilon(1e-14));
  CHECK(a[1] == 0.0);
  CHECK(a[2] == doctest::Approx(z).epsilon(1e-14));
  CHECK(z == doctest::Approx(1.2247).epsilon(1e-4));

  for (double x : group_advantages(std::vector<double>(8, 0.5))) CHECK(x == 0.0);
  const auto shifted = group_advantages(std::vector<double>{11, 12, 13});
  for (int i = 0; i < 3; ++i) CHECK(shifted[i] == doctest::Approx(a[i]).epsilon(1e-12));

  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}), GroupTooSmall);
  CHECK_THROWS_AS(group_advantages(std::vector<double>{}), GroupTooSmall);
}

TEST_CASE("group advantage identities") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0, 3);
  std::uniform_real_distribution<double> scale(0.01, 100), shift(-50, 50);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 2 + rng() % 63;
    std::vector<double> r(n);
    for (auto& x : r) x = normal(rng);
    const auto a = group_advantages(r);
    double mean = 0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(population_std(a) - 1.0) <= 1e-6);
    const double s = scale(rng), b = shift(rng);
    std::vector<double> r2(n);
    for (std::size_t i = 0; i < n; ++i) r2[i] = s * r[i] + b;
    const auto a2 = group_advantages(r2);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a2[i] - a[i]) <= 1e-9);
  }
}

TEST_CASE("clipped term") {
  CHECK(clipped_term(1.0, 2.0, 0.2) == 2.0);
  CHECK(clipped_term(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ratio(0.01, 3.0), adv(-5, 5);
  for (int t = 0; t < 50000; ++t) {
    const double r = ratio(rng), a = adv(rng);
    const double c = clipped_term(r, a, 0.2);
    CHECK(c <= r * a);
    CHECK(c <= std::clamp(r, 0.8, 1.2) * a);
    if (std::abs(r - 1.0) <= 0.2) CHECK(c == r * a);
  }
}

TEST_CASE("categorical KL") {
  Eigen::Vector2d p(0.5, 0.5), q(0.25, 0.75);
  CHECK(categorical_kl(p, p) == 0.0);
  CHECK(categorical_kl(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(categorical_kl(p, q) == doctest::Approx(0.1438).epsilon(1e-3));
  CHECK(categorical_kl(Eigen::Vector2d(1, 0), p) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(categorical_kl(p, Eigen::Vector2d(1, 0)), SupportMismatch);
  CHECK_THROWS_AS(categorical_kl(p, Eigen::Vector3d(0.2, 0.3, 0.5)), SupportMismatch);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.001, 1);
  for (int t = 0; t < 5000; ++t) {
    Eigen::VectorXd a(6), b(6);
    for (int i = 0; i < 6; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
    }
    a /= a.sum();
    b /= b.sum();
    CHECK(categorical_kl(a, b) > 0.0);
    CHECK(std::abs(categorical_kl(a, a)) < 1e-15);
  }
}

TEST_CASE("softmax rows are normalized") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0, 10);
  Eigen::MatrixXd z(7, 646);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  const Eigen::MatrixXd p = softmax_rows(z);
  for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-12);
}

TEST_CASE("standard action space") {
  const auto space = ActionSpace::standard();
  CHECK(space->score_bins().size() == 17);
  CHECK(space->score_bins().front() == 1.0);
  CHECK(space->score_bins().back() == 5.0);
  // empty, {no issue}, 8 singletons and 28 distortion pairs
  CHECK(space->label_sets().size() == 38);
  CHECK(space->size() == 17 * 38);
}

TEST_CASE("objective on identical policies is the mean advantage") {
  const auto space = ActionSpace::standard();
  ToyPolicy pol(space, 4);
  RolloutGroup g{"p", Side::A, 1, {3, 50, 600}, {}, {}};
  g.advantages = group_advantages(std::vector<double>{0.3, -1.2, 2.0});
  std::vector<RolloutGroup> groups{g};
  GrpoConfig cfg;
  CHECK(std::abs(grpo_objective(pol, pol, pol, groups, cfg)) < 1e-15);
}

TEST_CASE("objective matches a hand evaluation") {
  auto space = std::make_shared<const ActionSpace>(std::vector<double>{1, 3, 5}, std::vector<LabelSet>{LabelSet()});
  ToyPolicy pol(space, 2), old(space, 2), ref(space, 2);
  pol.logits().row(0) << std::log(0.5), std::log(0.3), std::log(0.2);
  RolloutGroup g{"p", Side::A, 0, {0, 1, 2}, {}, {1.0, -0.5, -0.5}};
  std::vector<RolloutGroup> groups{g};
  GrpoConfig cfg;
  cfg.kl_beta = 0;
  // ratios 1.5, 0.9, 0.6 against the uniform old policy:
  // min(1.5, 1.2) + (-0.45) + min(-0.3, -0.4) = 0.35
  CHECK(grpo_objective(pol, old, ref, groups, cfg) == doctest::Approx(0.35 / 3).epsilon(1e-13));

  // KL penalty lowers the objective monotonically in beta.
  double prev = INFINITY;
  for (double beta : {0.0, 0.01, 0.1, 1.0, 10.0}) {
    cfg.kl_beta = beta;
    const double v = grpo_objective(pol, old, ref, groups, cfg);
    CHECK(v < prev);
    prev = v;
  }
  cfg.kl_beta = 1.0;
  const double kl = 0.5 * std::log(1.5) + 0.3 * std::log(0.9) + 0.2 * std::log(0.6);
  CHECK(grpo_objective(pol, old, ref, groups, cfg) == doctest::Approx(0.35 / 3 - kl).epsilon(1e-13));
}

TEST_CASE("analytic gradient matches finite differences") {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (double beta : {0.0, 0.01, 1.0}) {
    for (int t = 0; t < 10; ++t) {
      auto c = oracle::random_gradcheck_config(rng, beta);
      if (oracle::near_kink(c, 1e-4)) continue;
      CHECK(oracle::gradcheck_relative_error(c) <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 25);
}

TEST_CASE("categorical sampling frequencies") {
  auto space = std::make_shared<const ActionSpace>(std::vector<double>{1, 2, 3, 4, 5},
                                                   std::vector<LabelSet>{LabelSet(), LabelSet({DistortionLabel::MotionBlur})});
  ToyPolicy pol(space, 2);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0, 1);
  for (Eigen::Index i = 0; i < pol.logits().size(); ++i) pol.logits()(i) = normal(rng);
  PairContext ctx;
  const int n = 100000;
  std::vector<int> counts(space->size(), 0);
  for (int s = 0; s < n / 8; ++s) {
    const auto roll = rollout_toy(pol, ctx, 8, static_cast<std::uint64_t>(s));
    for (auto a : roll.actions_a) ++counts[a];
  }
  const Eigen::VectorXd p = pol.probs(0);
  for (std::size_t a = 0; a < space->size(); ++a) {
    const double expect = n * p[static_cast<Eigen::Index>(a)];
    const double sigma = std::sqrt(n * p[static_cast<Eigen::Index>(a)] * (1 - p[static_cast<Eigen::Index>(a)]));
    CHECK(std::abs(counts[a] - expect) <= 3 * sigma);
  }
}

TEST_CASE("rollout_toy") {
  const auto space = ActionSpace::standard();
  ToyPolicy pol(space, 2);
  PairContext ctx;
  const auto r1 = rollout_toy(pol, ctx, 8, 123);
  const auto r2 = rollout_toy(pol, ctx, 8, 123);
  CHECK(r1.texts_a == r2.texts_a);
  CHECK(r1.texts_b == r2.texts_b);
  REQUIRE(r1.texts_a.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto pa = parse_answer(r1.texts_a[i]);
    CHECK(pa.format_ok);
    CHECK(pa.labels == (*space)[r1.actions_a[i]].labels);
    CHECK(pa.rating == space->score(r1.actions_a[i]));
    CHECK(parse_answer(r1.texts_b[i]).format_ok);
  }
  CHECK_THROWS_AS(rollout_toy(pol, ctx, 1, 0), GroupTooSmall);
}

TEST_CASE("training with zero learning rate leaves the policy alone") {
  const auto contexts = always_a_wins_contexts(5, 42);
  GrpoConfig cfg;
  cfg.learning_rate = 0;
  cfg.steps = 15;
  const auto res = grpo_train(contexts, cfg, RewardWeights{});
  CHECK(res.policy.logits() == res.reference.logits());
  for (const auto& s : res.stats) {
    CHECK(s.mean_reward == res.stats[0].mean_reward);
    CHECK(s.score_gap == res.stats[0].score_gap);
    CHECK(s.mean_kl == 0.0);
    CHECK(std::abs(s.objective - res.stats[0].objective) < 1e-15);
  }
}

TEST_CASE("training is deterministic and moves the score gap") {
  const auto contexts = always_a_wins_contexts(10, 42);
  GrpoConfig cfg;
  cfg.steps = 60;
  const auto a = grpo_train(contexts, cfg, RewardWeights{});
  const auto b = grpo_train(contexts, cfg, RewardWeights{});
  CHECK(a.policy.logits() == b.policy.logits());
  CHECK(a.stats.back().score_gap > a.stats.front().score_gap);
  CHECK(a.stats.back().mean_reward > a.stats.front().mean_reward);
  for (const auto& ctx : contexts) {
    CHECK(ctx.gt_pref == Preference::AWins);
    CHECK(ctx.gt_labels_a.distortion_count() < ctx.gt_labels_b.distortion_count());
    CHECK(ctx.gt_labels_b.distortion_count() <= 3);
  }
}

TEST_CASE("masked NLL") {
  CHECK(masked_nll(std::vector<double>{-1, -2, -3}, {true, true, true}) == 2.0);
  CHECK(masked_nll(std::vector<double>{-1, -2, -3}, {false, false, true}) == 3.0);
  CHECK(masked_nll(std::vector<double>{-1, -9, -3}, {true, false, true}) == 2.0);
  CHECK_THROWS_AS(masked_nll(std::vector<double>{-1, -2}, {false, false}), EmptyMask);
  CHECK_THROWS_AS(masked_nll(std::vector<double>{-1, -2}, {true}), std::invalid_argument);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-10, 0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> lp(1 + rng() % 50);
    double sum = 0;
    for (auto& x : lp) {
      x = u(rng);
      sum += x;
    }
    CHECK(masked_nll(lp, std::vector<bool>(lp.size(), true)) == -sum / static_cast<double>(lp.size()));
  }
}

TEST_CASE("config validation") {
  GrpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.group_size = 1;
  CHECK_THROWS_AS(c.validate(), GroupTooSmall);
  c = GrpoConfig{};
  c.clip_eps = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = GrpoConfig{};
  c.kl_beta = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
