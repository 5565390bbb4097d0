#include "doctest.h"

#include <algorithm>
#include <random>

#include "fdreward/bench.hpp"

using namespace fdreward;

namespace {

constexpr auto A = Preference::AWins;
constexpr auto B = Preference::BWins;
constexpr auto T = Preference::Tie;

const LabelSet kDistorted{DistortionLabel::MotionBlur};
const LabelSet kClean{};

Preference swapped(Preference p) { return p == A ? B : p == B ? A : T; }

}  // namespace

TEST_CASE("preference from scores") {
  CHECK(preference_from_scores(4.5, 2.0, 0.25) == A);
  CHECK(preference_from_scores(3.0, 3.1, 0.25) == T);
  CHECK(preference_from_scores(3.0, 3.0, 0.0) == T);
  CHECK(preference_from_scores(2.0, 3.0, 0.25) == B);
  CHECK(preference_from_scores(3.0, 3.25, 0.25) == B);
  CHECK_THROWS_AS(preference_from_scores(1, 2, -0.1), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1, 5), t(0, 1);
  for (int i = 0; i < 20000; ++i) {
    const double a = u(rng), b = i % 10 == 0 ? a : u(rng), th = t(rng);
    CHECK(preference_from_scores(b, a, th) == swapped(preference_from_scores(a, b, th)));
  }
}

TEST_CASE("accuracy with tie") {
  CHECK(accuracy_with_tie(std::vector{A, T, B}, std::vector{A, B, B}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(accuracy_with_tie(std::vector{T, T}, std::vector{A, B}) == 0.0);
  CHECK(accuracy_with_tie(std::vector{A, B, T, T}, std::vector{A, B, T, T}) == 1.0);
  CHECK_THROWS_AS(accuracy_with_tie(std::vector{A}, std::vector{A, B}), LengthMismatch);

  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    std::vector<Preference> p(1 + rng() % 30), g(p.size());
    for (auto& x : p) x = static_cast<Preference>(rng() % 3);
    for (auto& x : g) x = static_cast<Preference>(rng() % 3);
    const double acc = accuracy_with_tie(p, g);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    std::vector<std::size_t> perm(p.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Preference> p2, g2;
    for (auto k : perm) {
      p2.push_back(p[k]);
      g2.push_back(g[k]);
    }
    CHECK(accuracy_with_tie(p2, g2) == acc);
  }
}

TEST_CASE("accuracy without tie") {
  using S = std::vector<std::pair<double, double>>;
  CHECK(accuracy_without_tie(S{{4, 2}, {1, 3}}, std::vector{A, B}) == 1.0);
  CHECK(accuracy_without_tie(S{{4, 2}, {3, 3}}, std::vector{A, B}) == 0.5);
  CHECK(accuracy_without_tie(S{{4, 2}, {3, 3}, {1, 5}}, std::vector{A, B, T}) == 0.5);
  CHECK_THROWS_AS(accuracy_without_tie(S{{2, 4}}, std::vector{T}), NoDecisivePairs);
  CHECK_THROWS_AS(accuracy_without_tie(S{{2, 4}}, std::vector{T, A}), LengthMismatch);
}

TEST_CASE("recognition confusion") {
  const std::vector<LabelSet> gt{kDistorted, kDistorted, kClean, kClean};
  const std::vector<LabelSet> pred{kDistorted, kClean, kClean, kDistorted};
  const auto c = recognition_confusion(pred, gt);
  CHECK(c.distorted == ConfusionCounts{1, 1, 1, 1});
  const auto m = precision_recall_f1(c.distorted);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 0.5);
  CHECK(m.f1 == 0.5);

  const auto perfect = recognition_confusion(gt, gt);
  CHECK(perfect.distorted == ConfusionCounts{2, 0, 0, 2});
  CHECK(perfect.normal == ConfusionCounts{2, 0, 0, 2});

  const std::vector<LabelSet> all_clean(5, kClean), all_dist(5, kDistorted);
  CHECK(recognition_confusion(all_dist, all_clean).distorted == ConfusionCounts{0, 5, 0, 0});
  // "no issue" counts as a normal prediction.
  const std::vector<LabelSet> no_issue{LabelSet{DistortionLabel::NoIssue}};
  CHECK(recognition_confusion(no_issue, std::vector<LabelSet>{kClean}).normal.tp == 1);
  CHECK_THROWS_AS(recognition_confusion(no_issue, gt), LengthMismatch);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 300; ++i) {
    std::vector<LabelSet> p(1 + rng() % 40), g(p.size());
    for (auto& x : p) x = rng() % 2 ? kDistorted : kClean;
    for (auto& x : g) x = rng() % 2 ? kDistorted : kClean;
    const auto r = recognition_confusion(p, g);
    CHECK(r.distorted.tp == r.normal.tn);
    CHECK(r.distorted.fp == r.normal.fn);
    CHECK(r.distorted.fn == r.normal.fp);
    CHECK(r.distorted.total() == static_cast<long>(p.size()));
    CHECK(r.normal.total() == static_cast<long>(p.size()));
  }
}

TEST_CASE("precision recall f1") {
  const auto m = precision_recall_f1({3, 1, 1, 0});
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.75);
  CHECK(m.f1 == 0.75);
  const auto z = precision_recall_f1({0, 0, 0, 7});
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);
  CHECK(z.f1 == 0.0);
  CHECK(std::abs(f1_from(0.825, 0.866) - 0.845) <= 0.0005);
  CHECK(std::abs(f1_from(0.771, 0.594) - 0.671) <= 0.0005);

  std::mt19937_64 rng(10);
  for (int i = 0; i < 5000; ++i) {
    const ConfusionCounts c{static_cast<long>(rng() % 50), static_cast<long>(rng() % 50),
                            static_cast<long>(rng() % 50), 0};
    const auto r = precision_recall_f1(c);
    if (r.precision > 0 && r.recall > 0) {
      CHECK(std::abs(r.f1 - 2 * r.precision * r.recall / (r.precision + r.recall)) <= 1e-12);
      CHECK(r.f1 >= std::min(r.precision, r.recall) - 1e-15);
      CHECK(r.f1 <= std::max(r.precision, r.recall) + 1e-15);
    }
  }
}

TEST_CASE("filter_cot") {
  FrameAnnotation gt{"f", "f.png", LabelSet({DistortionLabel::MotionBlur, DistortionLabel::ExtraLimbs}, LabelRole::GroundTruth),
                     {{DistortionLabel::MotionBlur, {BoundingBox(0, 0, 10, 10)}},
                      {DistortionLabel::ExtraLimbs, {BoundingBox(50, 50, 70, 80)}}}};
  CotCandidate good{"f", gt.labels, {{DistortionLabel::MotionBlur, {BoundingBox(1, 1, 10, 10)}},
                                     {DistortionLabel::ExtraLimbs, {BoundingBox(50, 50, 70, 80)}}}, "r"};
  CHECK(filter_cot(good, gt, 0.5).keep);
  CHECK(filter_cot(good, gt, 0.5).reasons.empty());

  auto wrong_labels = good;
  wrong_labels.labels = LabelSet{DistortionLabel::MotionBlur};
  const auto d1 = filter_cot(wrong_labels, gt, 0.5);
  CHECK_FALSE(d1.keep);
  CHECK(std::find(d1.reasons.begin(), d1.reasons.end(), "label-set mismatch") != d1.reasons.end());

  auto shifted = good;
  shifted.regions[DistortionLabel::MotionBlur] = {BoundingBox(5, 5, 15, 15)};  // IoU 25/175
  const auto d2 = filter_cot(shifted, gt, 0.5);
  CHECK_FALSE(d2.keep);
  REQUIRE(d2.reasons.size() == 1);
  CHECK(d2.reasons[0].find("0.1429") != std::string::npos);
  CHECK(filter_cot(shifted, gt, 0.14).keep);

  auto missing = good;
  missing.regions.erase(DistortionLabel::ExtraLimbs);
  CHECK_FALSE(filter_cot(missing, gt, 0.5).keep);

  // A wrong-label box does not satisfy a ground-truth box.
  auto swapped_boxes = good;
  std::swap(swapped_boxes.regions[DistortionLabel::MotionBlur], swapped_boxes.regions[DistortionLabel::ExtraLimbs]);
  CHECK(filter_cot(swapped_boxes, gt, 0.5).reasons.size() == 2);

  CHECK_THROWS_AS(filter_cot(good, gt, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(filter_cot(good, gt, 1.5), std::invalid_argument);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> off(-6, 6), t(0.01, 1.0);
  for (int i = 0; i < 2000; ++i) {
    auto c = good;
    const double dx = off(rng), dy = off(rng);
    c.regions[DistortionLabel::MotionBlur] = {BoundingBox(20 + dx, 20 + dy, 30 + dx, 30 + dy)};
    gt.boxes[DistortionLabel::MotionBlur] = {BoundingBox(20, 20, 30, 30)};
    const double hi = t(rng), lo = t(rng) * hi;
    if (filter_cot(c, gt, hi).keep) CHECK(filter_cot(c, gt, lo).keep);
  }
}
