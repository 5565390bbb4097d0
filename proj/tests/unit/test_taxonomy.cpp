#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "fdreward/taxonomy.hpp"

using namespace fdreward;
using L = DistortionLabel;

TEST_CASE("canonical label strings round-trip") {
  const std::vector<std::string> names = {"limb deformation",   "limb incompleteness", "extra limbs",
                                          "torso deformation",  "facial deformation",  "mesh penetration",
                                          "non-animal distortion and collapse", "motion blur", "no issue"};
  REQUIRE(all_labels().size() == names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    CHECK(to_string(all_labels()[i]) == names[i]);
    CHECK(parse_label(names[i]) == all_labels()[i]);
  }
  CHECK(parse_label("Limb Deformation") == L::LimbDeformation);
  CHECK(parse_label("MOTION BLUR") == L::MotionBlur);
  CHECK_FALSE(parse_label("limb-deformation").has_value());
  CHECK_FALSE(parse_label("deformed limbs").has_value());
  CHECK_FALSE(parse_label(" motion blur").has_value());
  CHECK_FALSE(is_distortion(L::NoIssue));
  CHECK(is_distortion(L::ExtraLimbs));
}

TEST_CASE("label sets") {
  SUBCASE("no issue is exclusive") {
    CHECK_THROWS_AS(LabelSet({L::NoIssue, L::MotionBlur}), InvalidAnnotation);
    CHECK_THROWS_AS(LabelSet({L::NoIssue, L::ExtraLimbs}, LabelRole::GroundTruth), InvalidAnnotation);
    CHECK_NOTHROW(LabelSet({L::NoIssue}));
  }
  SUBCASE("ground truth carries at most three distortions") {
    CHECK_NOTHROW(LabelSet({L::LimbDeformation, L::ExtraLimbs, L::MotionBlur}, LabelRole::GroundTruth));
    CHECK_THROWS_AS(LabelSet({L::LimbDeformation, L::ExtraLimbs, L::MotionBlur, L::MeshPenetration},
                             LabelRole::GroundTruth),
                    InvalidAnnotation);
    const LabelSet many({L::LimbDeformation, L::ExtraLimbs, L::MotionBlur, L::MeshPenetration, L::TorsoDeformation});
    CHECK(many.size() == 5);
  }
  SUBCASE("membership, not multiplicity") {
    const LabelSet s(std::vector<L>{L::MotionBlur, L::MotionBlur, L::ExtraLimbs});
    CHECK(s.size() == 2);
    CHECK(s.contains(L::MotionBlur));
    CHECK(s == LabelSet({L::ExtraLimbs, L::MotionBlur}));
  }
  SUBCASE("clean sets") {
    CHECK(LabelSet().is_clean());
    CHECK(LabelSet({L::NoIssue}).is_clean());
    CHECK(LabelSet({L::NoIssue}).distortion_count() == 0);
    CHECK_FALSE(LabelSet({L::MotionBlur}).is_clean());
  }
  SUBCASE("every mask is either valid or rejected") {
    for (LabelSet::Mask m = 0; m < (1u << kNumLabels); ++m) {
      for (auto role : {LabelRole::GroundTruth, LabelRole::Prediction}) {
        if (LabelSet::valid_mask(m, role)) {
          CHECK(LabelSet::from_mask(m, role).mask() == m);
        } else {
          CHECK_THROWS_AS(LabelSet::from_mask(m, role), InvalidAnnotation);
        }
      }
    }
  }
  SUBCASE("parse_label_set") {
    CHECK(parse_label_set({"null"}, LabelRole::Prediction).empty());
    CHECK(parse_label_set({"Motion Blur", "extra limbs"}, LabelRole::GroundTruth) ==
          LabelSet({L::MotionBlur, L::ExtraLimbs}));
    CHECK_THROWS_AS(parse_label_set({"weird glow"}, LabelRole::Prediction), InvalidAnnotation);
  }
}

TEST_CASE("bounding boxes") {
  CHECK_THROWS_AS(BoundingBox(10, 0, 10, 5), InvalidAnnotation);
  CHECK_THROWS_AS(BoundingBox(0, 5, 4, 5), InvalidAnnotation);
  CHECK_THROWS_AS(BoundingBox(-1, 0, 4, 5), InvalidAnnotation);
  CHECK_THROWS_AS(BoundingBox(0, 0, NAN, 5), InvalidAnnotation);
  CHECK(BoundingBox(0, 0, 10, 10).fits_within(10, 10));
  CHECK_FALSE(BoundingBox(0, 0, 11, 10).fits_within(10, 10));
}

TEST_CASE("bbox_iou examples") {
  const BoundingBox a(0, 0, 10, 10);
  CHECK(bbox_iou(a, BoundingBox(0, 0, 10, 10)) == 1.0);
  CHECK(bbox_iou(a, BoundingBox(20, 20, 30, 30)) == 0.0);
  CHECK(bbox_iou(a, BoundingBox(5, 5, 15, 15)) == doctest::Approx(25.0 / 175.0).epsilon(1e-15));
  // Touching edges share no interior.
  CHECK(bbox_iou(a, BoundingBox(10, 0, 20, 10)) == 0.0);
}

TEST_CASE("bbox_iou is symmetric and bounded") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 100);
  for (int t = 0; t < 20000; ++t) {
    double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    double p1 = u(rng), p2 = u(rng), q1 = u(rng), q2 = u(rng);
    if (x1 == x2 || y1 == y2 || p1 == p2 || q1 == q2) continue;
    const BoundingBox a(std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2));
    const BoundingBox b(std::min(p1, p2), std::min(q1, q2), std::max(p1, p2), std::max(q1, q2));
    const double ab = bbox_iou(a, b);
    CHECK(ab == bbox_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(bbox_iou(a, a) == 1.0);
  }
}

TEST_CASE("frame annotation invariants") {
  FrameAnnotation a{"f", "f.png", LabelSet({L::MotionBlur}, LabelRole::GroundTruth), {}};
  CHECK_THROWS_AS(a.validate(), InvalidAnnotation);  // distortion without a box
  a.boxes[L::MotionBlur] = {BoundingBox(0, 0, 5, 5)};
  CHECK_NOTHROW(a.validate());
  a.boxes[L::ExtraLimbs] = {BoundingBox(0, 0, 5, 5)};
  CHECK_THROWS_AS(a.validate(), InvalidAnnotation);  // box for an absent label

  FrameAnnotation clean{"g", "g.png", LabelSet({L::NoIssue}, LabelRole::GroundTruth), {}};
  CHECK_NOTHROW(clean.validate());
  clean.boxes[L::NoIssue] = {BoundingBox(0, 0, 5, 5)};
  CHECK_THROWS_AS(clean.validate(), InvalidAnnotation);
}

TEST_CASE("pseudo-score bands") {
  CHECK(pseudo_score_band(0) == ScoreBand{4.0, 5.0});
  CHECK(pseudo_score_band(1) == ScoreBand{3.0, 4.0});
  CHECK(pseudo_score_band(2) == ScoreBand{2.0, 3.0});
  CHECK(pseudo_score_band(3) == ScoreBand{1.0, 2.0});
  CHECK(pseudo_score_band(5) == ScoreBand{1.0, 2.0});
  for (std::size_t n = 3; n < 50; ++n) CHECK(pseudo_score_band(n) == pseudo_score_band(3));
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t n = m + 1; n <= 3; ++n) CHECK(pseudo_score_band(m).lo >= pseudo_score_band(n).hi);
  }
}

TEST_CASE("sample_pseudo_score stays in band with two decimals") {
  const double s0 = sample_pseudo_score(0, 7);
  CHECK(s0 >= 4.0);
  CHECK(s0 <= 5.0);
  CHECK(sample_pseudo_score(3, 7) >= 1.0);
  CHECK(sample_pseudo_score(3, 7) <= 2.0);
  CHECK(sample_pseudo_score(0, 7) == s0);

  std::array<double, 4> mean{};
  const int trials = 5000;
  for (std::size_t n = 0; n <= 4; ++n) {
    const ScoreBand band = pseudo_score_band(n);
    for (std::uint64_t seed = 0; seed < trials; ++seed) {
      const double s = sample_pseudo_score(n, seed);
      REQUIRE(band.contains(s));
      const double cents = s * 100.0;
      REQUIRE(std::abs(cents - std::round(cents)) < 1e-9);
      if (n < 4) mean[n] += s / trials;
    }
  }
  for (std::size_t n = 0; n + 1 < mean.size(); ++n) CHECK(mean[n] > mean[n + 1]);
}

TEST_CASE("stable_hash is FNV-1a") {
  // Reference values of 64-bit FNV-1a.
  CHECK(stable_hash("") == 0xcbf29ce484222325ULL);
  CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(stable_hash("foobar") == 0x85944171f73967e8ULL);
}
