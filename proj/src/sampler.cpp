#include "fdreward/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdreward/random.hpp"

namespace fdreward {

void SamplerConfig::validate() const {
  if (!(video_fps > 0.0) || !std::isfinite(video_fps)) throw std::invalid_argument("video_fps must be > 0");
  if (n_frames <= 0) throw std::invalid_argument("n_frames must be > 0");
  if (budget < 2 || budget % 2 != 0) throw std::invalid_argument("budget must be even and >= 2");
  if (budget > n_frames) {
    throw BudgetExceedsFrames("budget " + std::to_string(budget) + " exceeds n_frames " + std::to_string(n_frames));
  }
  if (!(1.0 <= low_threshold && low_threshold < high_threshold && high_threshold <= 5.0)) {
    throw std::invalid_argument("thresholds must satisfy 1 <= low < high <= 5");
  }
}

int SamplerConfig::window() const { return std::max(1, static_cast<int>(std::lround(video_fps / 4.0))); }

std::string_view to_string(SampleCase c) {
  switch (c) {
    case SampleCase::AllHigh: return "ALL_HIGH";
    case SampleCase::LowPresent: return "LOW_PRESENT";
    case SampleCase::Mixed: return "MIXED";
  }
  return "?";
}

std::vector<int> stage1_indices(const SamplerConfig& cfg) {
  cfg.validate();
  const long half = cfg.budget / 2;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(half));
  for (long k = 0; k < half; ++k) out.push_back(static_cast<int>(k * cfg.n_frames / half));
  return out;
}

SampleCase classify_scores(std::span<const double> scores, const SamplerConfig& cfg) {
  if (scores.empty()) throw std::invalid_argument("classify_scores needs at least one score");
  if (std::any_of(scores.begin(), scores.end(), [&](double s) { return s < cfg.low_threshold; })) {
    return SampleCase::LowPresent;
  }
  if (std::all_of(scores.begin(), scores.end(), [&](double s) { return s > cfg.high_threshold; })) {
    return SampleCase::AllHigh;
  }
  return SampleCase::Mixed;
}

namespace {

class FramePool {
 public:
  FramePool(int n_frames, std::span<const int> stage1) : used_(static_cast<std::size_t>(n_frames), false) {
    for (int i : stage1) mark(i);
  }

  bool in_range(int i) const { return i >= 0 && i < static_cast<int>(used_.size()); }
  bool available(int i) const { return in_range(i) && !used_[static_cast<std::size_t>(i)]; }
  void mark(int i) { used_[static_cast<std::size_t>(i)] = true; }

  // Closest free index to `target`; on ties the later frame wins.
  int nearest_free(int target) const {
    const int n = static_cast<int>(used_.size());
    for (int d = 0; d < n; ++d) {
      if (available(target + d)) return target + d;
      if (available(target - d)) return target - d;
    }
    return -1;
  }

 private:
  std::vector<bool> used_;
};

struct Builder {
  FramePool pool;
  std::vector<int> picked;
  std::size_t want;
  std::vector<std::string>* diagnostics;

  bool full() const { return picked.size() >= want; }
  void take(int i) {
    pool.mark(i);
    picked.push_back(i);
  }
  void note(std::string msg) {
    if (diagnostics) diagnostics->push_back(std::move(msg));
  }

  void fill_midpoints(std::span<const int> stage1, int n_frames) {
    for (std::size_t k = 0; k < stage1.size() && !full(); ++k) {
      const int next = k + 1 < stage1.size() ? stage1[k + 1] : n_frames;
      const int mid = (stage1[k] + next) / 2;
      if (pool.available(mid)) {
        take(mid);
        continue;
      }
      const int alt = pool.nearest_free(mid);
      note("midpoint " + std::to_string(mid) + " unavailable; used nearest free frame " + std::to_string(alt));
      take(alt);
    }
  }
};

std::vector<int> low_present(Builder& b, std::span<const int> stage1, std::span<const double> scores,
                             const SamplerConfig& cfg) {
  const int w = cfg.window();
  std::vector<int> anchors;
  for (std::size_t k = 0; k < stage1.size(); ++k) {
    if (scores[k] < cfg.low_threshold) anchors.push_back(stage1[k]);
  }
  if (anchors.empty()) {
    b.note("no stage-1 score below the low threshold; using midpoints");
    b.fill_midpoints(stage1, cfg.n_frames);
    return b.picked;
  }
  // Per-anchor cursor over offsets +1, -1, +2, -2, ..., +w, -w.
  std::vector<int> cursor(anchors.size(), 0);
  const int max_cursor = 2 * w;
  bool progress = true;
  while (!b.full() && progress) {
    progress = false;
    for (std::size_t j = 0; j < anchors.size() && !b.full(); ++j) {
      while (cursor[j] < max_cursor) {
        const int c = cursor[j]++;
        const int d = c / 2 + 1;
        const int idx = anchors[j] + (c % 2 == 0 ? d : -d);
        if (b.pool.available(idx)) {
          b.take(idx);
          progress = true;
          break;
        }
      }
    }
  }
  if (!b.full()) {
    b.note("WindowExhausted: fewer than " + std::to_string(b.want) + " free frames within +/-" + std::to_string(w) +
           " of low-score anchors; filling with nearest free frames");
    for (std::size_t j = 0; !b.full(); j = (j + 1) % anchors.size()) b.take(b.pool.nearest_free(anchors[j]));
  }
  return b.picked;
}

std::vector<int> mixed(Builder& b, std::span<const int> stage1, std::span<const double> scores,
                       const SamplerConfig& cfg) {
  const int w = cfg.window();
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  std::vector<std::size_t> low;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k] < mean) low.push_back(k);
  }
  std::stable_sort(low.begin(), low.end(), [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });

  Rng rng(cfg.seed);
  for (std::size_t k : low) {
    if (b.full()) break;
    const int anchor = stage1[k];
    std::vector<int> candidates;
    for (int i = anchor - w; i <= anchor + w; ++i) {
      if (i != anchor && b.pool.available(i)) candidates.push_back(i);
    }
    for (int draws = 0; draws < 2 && !candidates.empty() && !b.full(); ++draws) {
      const auto pick = static_cast<std::size_t>(uniform_index(rng, candidates.size()));
      b.take(candidates[pick]);
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  b.fill_midpoints(stage1, cfg.n_frames);
  return b.picked;
}

}  // namespace

std::vector<int> stage2_indices(SampleCase c, std::span<const int> stage1, std::span<const double> scores,
                                const SamplerConfig& cfg, std::vector<std::string>* diagnostics) {
  cfg.validate();
  if (stage1.size() != scores.size()) throw std::invalid_argument("stage1 and scores differ in length");
  if (stage1.empty()) throw std::invalid_argument("stage1 is empty");
  for (int i : stage1) {
    if (i < 0 || i >= cfg.n_frames) throw std::out_of_range("stage1 index outside [0, n_frames)");
  }
  Builder b{FramePool(cfg.n_frames, stage1), {}, static_cast<std::size_t>(cfg.budget / 2), diagnostics};
  switch (c) {
    case SampleCase::AllHigh: b.fill_midpoints(stage1, cfg.n_frames); break;
    case SampleCase::LowPresent: low_present(b, stage1, scores, cfg); break;
    case SampleCase::Mixed: mixed(b, stage1, scores, cfg); break;
  }
  std::sort(b.picked.begin(), b.picked.end());
  return b.picked;
}

SamplingPlan plan_sampling(const SamplerConfig& cfg, std::span<const double> stage1_scores) {
  SamplingPlan plan;
  plan.stage1 = stage1_indices(cfg);
  if (stage1_scores.size() != plan.stage1.size()) {
    throw std::invalid_argument("expected " + std::to_string(plan.stage1.size()) + " stage-1 scores");
  }
  plan.case_tag = classify_scores(stage1_scores, cfg);
  plan.stage2 = stage2_indices(plan.case_tag, plan.stage1, stage1_scores, cfg, &plan.diagnostics);
  return plan;
}

double aggregate_video_score(std::span<const double> stage1_scores, std::span<const double> stage2_scores) {
  if (stage1_scores.empty() || stage2_scores.empty()) throw std::invalid_argument("both stages need scores");
  // Summing in sorted order keeps the result independent of input order.
  std::vector<double> all(stage1_scores.begin(), stage1_scores.end());
  all.insert(all.end(), stage2_scores.begin(), stage2_scores.end());
  std::sort(all.begin(), all.end());
  return std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
}

}  // namespace fdreward
