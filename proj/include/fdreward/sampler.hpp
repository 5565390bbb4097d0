#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fdreward {

class BudgetExceedsFrames : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SamplerConfig {
  double video_fps = 24.0;
  int n_frames = 48;
  // Total frames scored across both stages; even, >= 2.
  int budget = 8;
  double high_threshold = 4.0;
  double low_threshold = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Half-width in frames of the quarter-second neighbourhood, at least 1.
  int window() const;
};

enum class SampleCase { AllHigh, LowPresent, Mixed };
std::string_view to_string(SampleCase c);  // "ALL_HIGH" | "LOW_PRESENT" | "MIXED"

struct SamplingPlan {
  std::vector<int> stage1;
  std::vector<int> stage2;
  SampleCase case_tag = SampleCase::Mixed;
  std::vector<std::string> diagnostics;
};

// budget/2 evenly spaced indices: floor(k * n_frames / (budget/2)).
std::vector<int> stage1_indices(const SamplerConfig& cfg);

// Strict comparisons: a score equal to a threshold is neither high nor low.
SampleCase classify_scores(std::span<const double> scores, const SamplerConfig& cfg);

// Second-stage indices, sorted ascending, disjoint from stage1. Fallbacks
// (window exhausted, midpoint collisions) are appended to `diagnostics`.
std::vector<int> stage2_indices(SampleCase c, std::span<const int> stage1, std::span<const double> scores,
                                const SamplerConfig& cfg, std::vector<std::string>* diagnostics = nullptr);

// stage1 + classification + stage2 in one call; `scores` align with stage1.
SamplingPlan plan_sampling(const SamplerConfig& cfg, std::span<const double> stage1_scores);

double aggregate_video_score(std::span<const double> stage1_scores, std::span<const double> stage2_scores);

}  // namespace fdreward
