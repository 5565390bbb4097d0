#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdreward/bench.hpp"
#include "fdreward/reward.hpp"
#include "fdreward/taxonomy.hpp"

namespace fdreward {

struct IngestIssue {
  enum class Kind { Io, Schema, DuplicateId };
  Kind kind = Kind::Schema;
  std::size_t line = 0;
  std::string field;
  std::string reason;

  std::string to_string() const;
};

// Raised when any line of a file fails validation; carries every issue found.
class IngestError : public std::runtime_error {
 public:
  IngestError(std::string path, std::vector<IngestIssue> issues);
  const std::vector<IngestIssue>& issues() const { return issues_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<IngestIssue> issues_;
};

struct FramePairRecord {
  std::string pair_id;
  std::string prompt;
  FrameAnnotation a;
  FrameAnnotation b;
  Preference gt_pref = Preference::Tie;
};

struct PairPrediction {
  std::string pair_id;
  double score_a = 0;
  double score_b = 0;
};

struct FramePrediction {
  std::string frame_id;
  LabelSet labels;
  std::optional<double> rating;
};

// One raw model response; keyed by pair/side for paired data or by frame.
struct RolloutRecord {
  std::string pair_id;
  std::optional<Side> side;  // set for paired rollouts
  std::string frame_id;      // set for frame rollouts
  int rollout_index = 0;
  std::string text;
};

// All-or-nothing loaders. Each throws IngestError listing every bad line.
std::vector<FramePairRecord> ingest_pairs(const std::filesystem::path& path);
std::vector<FrameAnnotation> ingest_frames(const std::filesystem::path& path);
std::vector<PairPrediction> ingest_pair_predictions(const std::filesystem::path& path);
std::vector<FramePrediction> ingest_frame_predictions(const std::filesystem::path& path);
std::vector<RolloutRecord> ingest_rollouts(const std::filesystem::path& path);
std::vector<CotCandidate> ingest_cot_candidates(const std::filesystem::path& path);

}  // namespace fdreward
