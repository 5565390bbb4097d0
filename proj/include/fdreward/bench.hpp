#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fdreward/reward.hpp"
#include "fdreward/taxonomy.hpp"

namespace fdreward {

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NoDecisivePairs : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// |s_a - s_b| < tie_threshold is a tie; exact equality is always a tie.
Preference preference_from_scores(double s_a, double s_b, double tie_threshold);

// Fraction of exact three-way matches.
double accuracy_with_tie(std::span<const Preference> preds, std::span<const Preference> gts);

// Two-way accuracy over pairs whose ground truth is not a tie. The strictly
// higher score wins; equal scores count as wrong.
double accuracy_without_tie(std::span<const std::pair<double, double>> scores, std::span<const Preference> gts);

struct ConfusionCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct RecognitionConfusion {
  ConfusionCounts distorted;  // distorted frames are the positive class
  ConfusionCounts normal;     // normal frames are the positive class
};

RecognitionConfusion recognition_confusion(std::span<const LabelSet> preds, std::span<const LabelSet> gts);

struct PrecisionRecallF1 {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// 0/0 in any ratio yields 0.
PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c);
double f1_from(double precision, double recall);

struct CotCandidate {
  std::string frame_id;
  LabelSet labels;
  BoxMap regions;
  std::string reasoning;
};

struct CotDecision {
  bool keep = false;
  std::vector<std::string> reasons;
};

// Keeps a synthesized reasoning sample when its labels equal the annotation
// and each annotated box is matched by a same-label predicted box with
// IoU >= iou_threshold.
CotDecision filter_cot(const CotCandidate& candidate, const FrameAnnotation& gt, double iou_threshold = 0.5);

}  // namespace fdreward
