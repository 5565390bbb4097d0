#include "fdreward/bench.hpp"

#include <cmath>
#include <cstdio>

namespace fdreward {

Preference preference_from_scores(double s_a, double s_b, double tie_threshold) {
  if (!(tie_threshold >= 0.0)) throw std::invalid_argument("tie_threshold must be >= 0");
  if (s_a == s_b || std::abs(s_a - s_b) < tie_threshold) return Preference::Tie;
  return s_a > s_b ? Preference::AWins : Preference::BWins;
}

double accuracy_with_tie(std::span<const Preference> preds, std::span<const Preference> gts) {
  if (preds.size() != gts.size()) throw LengthMismatch("predictions and ground truth differ in length");
  if (preds.empty()) throw std::invalid_argument("accuracy over an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double accuracy_without_tie(std::span<const std::pair<double, double>> scores, std::span<const Preference> gts) {
  if (scores.size() != gts.size()) throw LengthMismatch("scores and ground truth differ in length");
  std::size_t decisive = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (gts[i] == Preference::Tie) continue;
    ++decisive;
    const auto [a, b] = scores[i];
    if ((gts[i] == Preference::AWins && a > b) || (gts[i] == Preference::BWins && b > a)) ++hits;
  }
  if (decisive == 0) throw NoDecisivePairs("every ground-truth preference is a tie");
  return static_cast<double>(hits) / static_cast<double>(decisive);
}

RecognitionConfusion recognition_confusion(std::span<const LabelSet> preds, std::span<const LabelSet> gts) {
  if (preds.size() != gts.size()) throw LengthMismatch("predictions and ground truth differ in length");
  RecognitionConfusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool pred_distorted = !preds[i].is_clean();
    const bool gt_distorted = !gts[i].is_clean();
    if (pred_distorted && gt_distorted) ++c.distorted.tp;
    else if (pred_distorted && !gt_distorted) ++c.distorted.fp;
    else if (!pred_distorted && gt_distorted) ++c.distorted.fn;
    else ++c.distorted.tn;
  }
  c.normal = {c.distorted.tn, c.distorted.fn, c.distorted.fp, c.distorted.tp};
  return c;
}

double f1_from(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
  PrecisionRecallF1 m;
  m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = f1_from(m.precision, m.recall);
  return m;
}

CotDecision filter_cot(const CotCandidate& candidate, const FrameAnnotation& gt, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw std::invalid_argument("iou_threshold must lie in (0, 1]");
  CotDecision d;
  if (candidate.labels.distortion_mask() != gt.labels.distortion_mask()) d.reasons.emplace_back("label-set mismatch");

  for (const auto& [label, boxes] : gt.boxes) {
    const auto it = candidate.regions.find(label);
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      double best = 0.0;
      if (it != candidate.regions.end()) {
        for (const auto& p : it->second) best = std::max(best, bbox_iou(p, boxes[k]));
      }
      if (best < iou_threshold) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.4f", best);
        d.reasons.push_back("region mismatch: \"" + std::string(to_string(label)) + "\" box " + std::to_string(k) +
                            " best IoU " + buf + " < threshold");
      }
    }
  }
  d.keep = d.reasons.empty();
  return d;
}

}  // namespace fdreward
