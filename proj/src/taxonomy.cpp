#include "fdreward/taxonomy.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>

#include "fdreward/random.hpp"

namespace fdreward {

namespace {

constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "limb deformation",
    "limb incompleteness",
    "extra limbs",
    "torso deformation",
    "facial deformation",
    "mesh penetration",
    "non-animal distortion and collapse",
    "motion blur",
    "no issue",
};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto ca = static_cast<unsigned char>(a[i]);
    auto cb = static_cast<unsigned char>(b[i]);
    if (std::tolower(ca) != std::tolower(cb)) return false;
  }
  return true;
}

constexpr LabelSet::Mask kAllMask = (1u << kNumLabels) - 1;

}  // namespace

std::string_view to_string(DistortionLabel label) {
  return kLabelNames.at(static_cast<std::size_t>(label));
}

std::optional<DistortionLabel> parse_label(std::string_view text) {
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (iequals(text, kLabelNames[i])) return static_cast<DistortionLabel>(i);
  }
  return std::nullopt;
}

const std::array<DistortionLabel, kNumLabels>& all_labels() {
  static const std::array<DistortionLabel, kNumLabels> labels = [] {
    std::array<DistortionLabel, kNumLabels> out{};
    for (std::size_t i = 0; i < kNumLabels; ++i) out[i] = static_cast<DistortionLabel>(i);
    return out;
  }();
  return labels;
}

// LabelSet

bool LabelSet::valid_mask(Mask mask, LabelRole role) {
  if ((mask & ~kAllMask) != 0) return false;
  const Mask no_issue = bit(DistortionLabel::NoIssue);
  const Mask distortions = mask & static_cast<Mask>(~no_issue);
  if ((mask & no_issue) != 0 && distortions != 0) return false;
  if (role == LabelRole::GroundTruth &&
      static_cast<std::size_t>(std::popcount(distortions)) > kMaxGroundTruthLabels) {
    return false;
  }
  return true;
}

LabelSet LabelSet::from_mask(Mask mask, LabelRole role) {
  if (!valid_mask(mask, role)) {
    const Mask no_issue = bit(DistortionLabel::NoIssue);
    if ((mask & no_issue) != 0 && (mask & ~no_issue) != 0) {
      throw InvalidAnnotation("\"no issue\" cannot be combined with distortion labels");
    }
    if ((mask & ~kAllMask) != 0) throw InvalidAnnotation("label mask out of range");
    throw InvalidAnnotation("ground truth may carry at most three issue labels");
  }
  return LabelSet(mask, role);
}

LabelSet::LabelSet(std::initializer_list<DistortionLabel> labels, LabelRole role)
    : LabelSet(std::vector<DistortionLabel>(labels), role) {}

LabelSet::LabelSet(const std::vector<DistortionLabel>& labels, LabelRole role) {
  Mask mask = 0;
  for (auto l : labels) mask |= bit(l);
  *this = from_mask(mask, role);
}

std::size_t LabelSet::size() const { return static_cast<std::size_t>(std::popcount(mask_)); }

std::size_t LabelSet::distortion_count() const {
  return static_cast<std::size_t>(std::popcount(distortion_mask()));
}

std::vector<DistortionLabel> LabelSet::labels() const {
  std::vector<DistortionLabel> out;
  for (auto l : all_labels()) {
    if (contains(l)) out.push_back(l);
  }
  return out;
}

std::vector<std::string> LabelSet::to_strings() const {
  std::vector<std::string> out;
  for (auto l : labels()) out.emplace_back(to_string(l));
  return out;
}

LabelSet parse_label_set(const std::vector<std::string>& names, LabelRole role) {
  std::vector<DistortionLabel> labels;
  for (const auto& name : names) {
    if (iequals(name, "null")) continue;
    auto label = parse_label(name);
    if (!label) throw InvalidAnnotation("unknown label \"" + name + "\"");
    labels.push_back(*label);
  }
  return LabelSet(labels, role);
}

// BoundingBox

BoundingBox::BoundingBox(double x1, double y1, double x2, double y2)
    : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw InvalidAnnotation("bounding box coordinates must be finite");
  }
  if (x1 < 0 || y1 < 0) throw InvalidAnnotation("bounding box coordinates must be non-negative");
  if (!(x1 < x2) || !(y1 < y2)) throw InvalidAnnotation("bounding box requires x1 < x2 and y1 < y2");
}

double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double iy = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  // a.area() + b.area() is commutative, so the result is exactly symmetric.
  return inter / (a.area() + b.area() - inter);
}

void FrameAnnotation::validate() const {
  if (labels.role() != LabelRole::GroundTruth) {
    // Re-check under ground-truth rules even if built elsewhere.
    LabelSet::from_mask(labels.mask(), LabelRole::GroundTruth);
  }
  for (const auto& [label, list] : boxes) {
    if (label == DistortionLabel::NoIssue) throw InvalidAnnotation("\"no issue\" cannot carry boxes");
    if (!labels.contains(label)) {
      throw InvalidAnnotation("boxes given for label \"" + std::string(to_string(label)) +
                              "\" which is not in the label set");
    }
  }
  for (auto label : labels.labels()) {
    if (!is_distortion(label)) continue;
    auto it = boxes.find(label);
    if (it == boxes.end() || it->second.empty()) {
      throw InvalidAnnotation("label \"" + std::string(to_string(label)) + "\" has no bounding box");
    }
  }
}

// Pseudo-scores

ScoreBand pseudo_score_band(std::size_t n_labels) {
  switch (n_labels) {
    case 0: return {4.0, 5.0};
    case 1: return {3.0, 4.0};
    case 2: return {2.0, 3.0};
    default: return {1.0, 2.0};
  }
}

double sample_pseudo_score(std::size_t n_labels, std::uint64_t seed) {
  const ScoreBand band = pseudo_score_band(n_labels);
  Rng rng(mix_seed(seed, std::min<std::size_t>(n_labels, kMaxGroundTruthLabels)));
  const double u = unit_closed(rng());
  const double raw = band.lo + u * (band.hi - band.lo);
  return std::floor(raw * 100.0 + 0.5) / 100.0;
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fdreward
