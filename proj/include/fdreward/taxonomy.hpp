#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fdreward {

// Structural distortion categories plus the "no issue" sentinel. The string
// form of each value is a wire-format contract shared by every JSONL file.
enum class DistortionLabel : std::uint8_t {
  LimbDeformation = 0,
  LimbIncompleteness,
  ExtraLimbs,
  TorsoDeformation,
  FacialDeformation,
  MeshPenetration,
  NonAnimalCollapse,
  MotionBlur,
  NoIssue,
};

inline constexpr std::size_t kNumDistortionLabels = 8;
inline constexpr std::size_t kNumLabels = 9;
inline constexpr std::size_t kMaxGroundTruthLabels = 3;

std::string_view to_string(DistortionLabel label);

// Case-insensitive match against the canonical strings; nothing else maps.
std::optional<DistortionLabel> parse_label(std::string_view text);

const std::array<DistortionLabel, kNumLabels>& all_labels();

inline bool is_distortion(DistortionLabel label) { return label != DistortionLabel::NoIssue; }

class InvalidAnnotation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LabelRole { GroundTruth, Prediction };

// Deduplicated set of labels stored as a 9-bit mask.
class LabelSet {
 public:
  using Mask = std::uint16_t;

  LabelSet() = default;
  LabelSet(std::initializer_list<DistortionLabel> labels, LabelRole role = LabelRole::Prediction);
  LabelSet(const std::vector<DistortionLabel>& labels, LabelRole role = LabelRole::Prediction);

  // Throws InvalidAnnotation when the mask violates the role's invariants.
  static LabelSet from_mask(Mask mask, LabelRole role = LabelRole::Prediction);
  // Whether from_mask would accept the mask.
  static bool valid_mask(Mask mask, LabelRole role);

  bool contains(DistortionLabel label) const { return (mask_ & bit(label)) != 0; }
  bool empty() const { return mask_ == 0; }
  std::size_t size() const;
  // Labels other than the "no issue" sentinel.
  std::size_t distortion_count() const;
  Mask distortion_mask() const { return mask_ & static_cast<Mask>(~bit(DistortionLabel::NoIssue)); }
  // True for the empty set and for {"no issue"}.
  bool is_clean() const { return distortion_mask() == 0; }
  Mask mask() const { return mask_; }
  LabelRole role() const { return role_; }

  // Labels in canonical enum order.
  std::vector<DistortionLabel> labels() const;
  std::vector<std::string> to_strings() const;

  friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.mask_ == b.mask_; }

  static constexpr Mask bit(DistortionLabel label) {
    return static_cast<Mask>(1u << static_cast<unsigned>(label));
  }

 private:
  explicit LabelSet(Mask mask, LabelRole role) : mask_(mask), role_(role) {}
  Mask mask_ = 0;
  LabelRole role_ = LabelRole::Prediction;
};

// Parses canonical strings into a label set; unknown names are an error here.
// The literal "null" is accepted as an empty entry.
LabelSet parse_label_set(const std::vector<std::string>& names, LabelRole role);

// Pixel-space box, top-left origin; corners satisfy x1 < x2, y1 < y2.
class BoundingBox {
 public:
  BoundingBox(double x1, double y1, double x2, double y2);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double area() const { return (x2_ - x1_) * (y2_ - y1_); }
  bool fits_within(double width, double height) const { return x2_ <= width && y2_ <= height; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

double bbox_iou(const BoundingBox& a, const BoundingBox& b);

using BoxMap = std::map<DistortionLabel, std::vector<BoundingBox>>;

struct FrameAnnotation {
  std::string frame_id;
  std::string frame_ref;
  LabelSet labels;
  BoxMap boxes;

  // Throws InvalidAnnotation on broken label/box consistency.
  void validate() const;
};

struct ScoreBand {
  double lo;
  double hi;
  bool contains(double score) const { return score >= lo && score <= hi; }
  friend bool operator==(const ScoreBand&, const ScoreBand&) = default;
};

ScoreBand pseudo_score_band(std::size_t n_labels);

// Uniform draw from the band rounded half-up to two decimals.
double sample_pseudo_score(std::size_t n_labels, std::uint64_t seed);

// 64-bit FNV-1a, stable across platforms; used to derive per-item seeds.
std::uint64_t stable_hash(std::string_view text);

}  // namespace fdreward
