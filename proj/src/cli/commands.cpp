#include "fdreward/cli.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "fdreward/bench.hpp"
#include "fdreward/dataset.hpp"
#include "fdreward/gateway.hpp"
#include "fdreward/grpo.hpp"
#include "fdreward/jsonl.hpp"
#include "fdreward/response_parser.hpp"
#include "fdreward/reward.hpp"
#include "fdreward/sampler.hpp"

namespace fdreward {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// Bad inputs that are not tied to a particular file line.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ojson labels_json(const LabelSet& labels) {
  ojson arr = ojson::array();
  for (const auto& s : labels.to_strings()) arr.push_back(s);
  return arr;
}

ojson boxes_json(const BoxMap& boxes) {
  ojson obj = ojson::object();
  for (const auto& [label, list] : boxes) {
    ojson arr = ojson::array();
    for (const auto& b : list) arr.push_back({b.x1(), b.y1(), b.x2(), b.y2()});
    obj[std::string(to_string(label))] = std::move(arr);
  }
  return obj;
}

ojson optional_number(const std::optional<double>& x) { return x ? ojson(*x) : ojson(nullptr); }

std::string to_jsonl(const std::vector<ojson>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::string to_report(const ojson& report) { return report.dump(2) + "\n"; }

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

ojson weights_json(const RewardWeights& w) {
  return {{"lambda_fmt", w.lambda_fmt}, {"lambda_attr", w.lambda_attr}, {"lambda_pref", w.lambda_pref},
          {"theta", w.theta}};
}

ojson grpo_json(const GrpoConfig& c) {
  return {{"group_size", c.group_size}, {"clip_eps", c.clip_eps},     {"kl_beta", c.kl_beta},
          {"std_floor", c.std_floor},   {"learning_rate", c.learning_rate}, {"steps", c.steps},
          {"seed", c.seed}};
}

ojson sampler_json(const SamplerConfig& c) {
  return {{"video_fps", c.video_fps},          {"n_frames", c.n_frames},
          {"budget", c.budget},                {"high_threshold", c.high_threshold},
          {"low_threshold", c.low_threshold},  {"seed", c.seed}};
}

void add_weight_options(CLI::App* cmd, RewardWeights& w) {
  cmd->add_option("--lambda-fmt", w.lambda_fmt, "Weight of the format reward")->capture_default_str();
  cmd->add_option("--lambda-attr", w.lambda_attr, "Weight of the attribution reward")->capture_default_str();
  cmd->add_option("--lambda-pref", w.lambda_pref, "Weight of the preference reward")->capture_default_str();
  cmd->add_option("--theta", w.theta, "Tie parameter, must be > 1")->capture_default_str();
}

std::string side_name(Side s) { return s == Side::A ? "A" : "B"; }

// reward

struct RewardArgs {
  std::string pairs, rollouts, out;
  RewardWeights weights;
  double score_fallback = 1.0;
  double std_floor = 1e-6;
};

void cmd_reward(const RewardArgs& args, int jobs, std::ostream& out) {
  args.weights.validate();
  const auto pairs = ingest_pairs(args.pairs);
  const auto rollouts = ingest_rollouts(args.rollouts);

  std::map<std::string, std::size_t> pair_index;
  for (std::size_t i = 0; i < pairs.size(); ++i) pair_index.emplace(pairs[i].pair_id, i);

  // Per pair: rollout index -> text, for each side.
  std::vector<std::array<std::map<int, std::string>, 2>> texts(pairs.size());
  std::vector<IngestIssue> issues;
  std::size_t line = 0;
  for (const auto& r : rollouts) {
    ++line;
    if (!r.side) {
      issues.push_back({IngestIssue::Kind::Schema, line, "pair_id", "reward needs paired rollouts (pair_id and side)"});
      continue;
    }
    const auto it = pair_index.find(r.pair_id);
    if (it == pair_index.end()) {
      issues.push_back({IngestIssue::Kind::Schema, line, "pair_id", "unknown pair_id \"" + r.pair_id + "\""});
      continue;
    }
    texts[it->second][static_cast<std::size_t>(*r.side)][r.rollout_index] = r.text;
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::set<int> a, b;
    for (const auto& [k, _] : texts[i][0]) a.insert(k);
    for (const auto& [k, _] : texts[i][1]) b.insert(k);
    if (a != b) {
      issues.push_back({IngestIssue::Kind::Schema, 0, "rollout_index",
                        "pair \"" + pairs[i].pair_id + "\" has rollout indices that differ between sides"});
    }
  }
  if (!issues.empty()) throw IngestError(args.rollouts, std::move(issues));

  std::vector<std::vector<ojson>> per_pair(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto& p = pairs[i];
    std::vector<int> indices;
    std::vector<PairReward> rewards;
    for (const auto& [k, text_a] : texts[i][0]) {
      indices.push_back(k);
      rewards.push_back(score_rollout_pair(text_a, texts[i][1].at(k), p.a.labels, p.b.labels, p.gt_pref,
                                           args.weights, args.score_fallback));
    }
    std::vector<double> ra, rb;
    for (const auto& r : rewards) {
      ra.push_back(r.reward_a);
      rb.push_back(r.reward_b);
    }
    std::vector<double> adv_a, adv_b;
    if (rewards.size() >= 2) {
      adv_a = group_advantages(ra, args.std_floor);
      adv_b = group_advantages(rb, args.std_floor);
    }
    for (std::size_t j = 0; j < rewards.size(); ++j) {
      const auto& r = rewards[j];
      ojson rec = {{"pair_id", p.pair_id},   {"rollout_index", indices[j]}, {"r_fmt_a", r.r_fmt_a},
                   {"r_attr_a", r.r_attr_a}, {"r_pref", r.r_pref},          {"reward_a", r.reward_a},
                   {"r_fmt_b", r.r_fmt_b},   {"r_attr_b", r.r_attr_b},      {"reward_b", r.reward_b},
                   {"score_a", r.score_a},   {"score_b", r.score_b}};
      rec["advantage_a"] = adv_a.empty() ? ojson(nullptr) : ojson(adv_a[j]);
      rec["advantage_b"] = adv_b.empty() ? ojson(nullptr) : ojson(adv_b[j]);
      per_pair[i].push_back(std::move(rec));
    }
  });

  std::vector<ojson> records;
  for (auto& v : per_pair) {
    for (auto& r : v) records.push_back(std::move(r));
  }
  write_atomic(args.out, to_jsonl(records));
  out << to_report({{"command", "reward"},
                    {"records", records.size()},
                    {"config", {{"weights", weights_json(args.weights)}, {"score_fallback", args.score_fallback},
                                {"std_floor", args.std_floor}}}});
}

// bench

struct BenchPrefArgs {
  std::string pairs, predictions, out;
  double tie_threshold = 0.25;
};

void cmd_bench_pref(const BenchPrefArgs& args, std::ostream& out) {
  if (!(args.tie_threshold >= 0)) throw UsageError("tie threshold must be >= 0");
  const auto pairs = ingest_pairs(args.pairs);
  const auto preds = ingest_pair_predictions(args.predictions);
  std::map<std::string, const PairPrediction*> by_id;
  for (const auto& p : preds) by_id.emplace(p.pair_id, &p);

  std::vector<IngestIssue> issues;
  std::vector<Preference> gts, predicted;
  std::vector<std::pair<double, double>> scores;
  for (const auto& p : pairs) {
    const auto it = by_id.find(p.pair_id);
    if (it == by_id.end()) {
      issues.push_back({IngestIssue::Kind::Schema, 0, "pair_id", "no prediction for pair \"" + p.pair_id + "\""});
      continue;
    }
    gts.push_back(p.gt_pref);
    scores.emplace_back(it->second->score_a, it->second->score_b);
    predicted.push_back(preference_from_scores(it->second->score_a, it->second->score_b, args.tie_threshold));
  }
  if (!issues.empty()) throw IngestError(args.predictions, std::move(issues));
  if (pairs.empty()) throw UsageError("no pairs to evaluate");

  const double with_tie = accuracy_with_tie(predicted, gts);
  const double without_tie = accuracy_without_tie(scores, gts);
  long decisive = 0, ties = 0;
  for (auto g : gts) (g == Preference::Tie ? ties : decisive)++;
  ojson report = {{"acc_with_tie", with_tie},
                  {"acc_without_tie", without_tie},
                  {"tie_threshold", args.tie_threshold},
                  {"counts", {{"pairs", gts.size()}, {"decisive", decisive}, {"ties", ties}}},
                  {"config", {{"pairs", args.pairs}, {"predictions", args.predictions},
                              {"tie_threshold", args.tie_threshold}}}};
  const std::string text = to_report(report);
  if (args.out.empty()) {
    out << text;
  } else {
    write_atomic(args.out, text);
  }
}

struct BenchFramesArgs {
  std::string frames, predictions, out;
};

ojson prf_json(const PrecisionRecallF1& m, const ConfusionCounts& c) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"counts", {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}}}};
}

void cmd_bench_frames(const BenchFramesArgs& args, std::ostream& out) {
  const auto frames = ingest_frames(args.frames);
  const auto preds = ingest_frame_predictions(args.predictions);
  std::map<std::string, const FramePrediction*> by_id;
  for (const auto& p : preds) by_id.emplace(p.frame_id, &p);

  std::vector<IngestIssue> issues;
  std::set<std::string> known;
  std::vector<LabelSet> gts, predicted;
  for (const auto& f : frames) {
    known.insert(f.frame_id);
    const auto it = by_id.find(f.frame_id);
    if (it == by_id.end()) {
      issues.push_back({IngestIssue::Kind::Schema, 0, "frame_id", "no prediction for frame \"" + f.frame_id + "\""});
      continue;
    }
    gts.push_back(f.labels);
    predicted.push_back(it->second->labels);
  }
  for (const auto& p : preds) {
    if (!known.count(p.frame_id)) {
      issues.push_back({IngestIssue::Kind::Schema, 0, "frame_id", "prediction for unknown frame \"" + p.frame_id + "\""});
    }
  }
  if (!issues.empty()) throw IngestError(args.predictions, std::move(issues));

  const auto conf = recognition_confusion(predicted, gts);
  ojson report = {{"distorted", prf_json(precision_recall_f1(conf.distorted), conf.distorted)},
                  {"normal", prf_json(precision_recall_f1(conf.normal), conf.normal)},
                  {"counts", {{"frames", gts.size()}}},
                  {"config", {{"frames", args.frames}, {"predictions", args.predictions}}}};
  const std::string text = to_report(report);
  if (args.out.empty()) {
    out << text;
  } else {
    write_atomic(args.out, text);
  }
}

// sample plan

struct SamplePlanArgs {
  std::string scores, out, video_id;
  SamplerConfig cfg;
};

void cmd_sample_plan(const SamplePlanArgs& args, std::ostream& out) {
  args.cfg.validate();
  const auto doc = nlohmann::json::parse(read_file(args.scores), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw UsageError(args.scores + ": not a JSON object");
  const auto scores_it = doc.find("scores");
  if (scores_it == doc.end() || !scores_it->is_object()) throw UsageError(args.scores + ": missing \"scores\" object");

  std::map<int, double> by_index;
  for (const auto& [key, value] : scores_it->items()) {
    std::size_t used = 0;
    int idx = -1;
    try {
      idx = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size() || idx < 0) throw UsageError(args.scores + ": score key \"" + key + "\" is not a frame index");
    if (!value.is_number()) throw UsageError(args.scores + ": score for frame " + key + " is not a number");
    by_index[idx] = value.get<double>();
  }
  const auto stage1 = stage1_indices(args.cfg);
  std::vector<double> scores;
  for (int idx : stage1) {
    const auto it = by_index.find(idx);
    if (it == by_index.end()) throw UsageError(args.scores + ": no score for stage-1 frame " + std::to_string(idx));
    scores.push_back(it->second);
  }
  if (by_index.size() != stage1.size()) throw UsageError(args.scores + ": scores given for frames outside stage 1");

  std::string video_id = args.video_id;
  if (video_id.empty()) {
    if (const auto v = doc.find("video_id"); v != doc.end() && v->is_string()) video_id = v->get<std::string>();
  }
  const SamplingPlan plan = plan_sampling(args.cfg, scores);
  ojson report = {{"video_id", video_id},
                  {"case", std::string(to_string(plan.case_tag))},
                  {"stage1", plan.stage1},
                  {"stage2", plan.stage2},
                  {"diagnostics", plan.diagnostics},
                  {"config", sampler_json(args.cfg)}};
  const std::string text = to_report(report);
  if (args.out.empty()) {
    out << text;
  } else {
    write_atomic(args.out, text);
  }
}

// grpo demo

struct GrpoDemoArgs {
  std::string out;
  GrpoConfig cfg;
  RewardWeights weights;
  std::size_t contexts = 50;
};

void cmd_grpo_demo(const GrpoDemoArgs& args, std::ostream& out) {
  args.cfg.validate();
  args.weights.validate();
  if (args.contexts == 0) throw UsageError("--contexts must be >= 1");
  const auto contexts = always_a_wins_contexts(args.contexts, args.cfg.seed);
  const TrainResult result = grpo_train(contexts, args.cfg, args.weights);
  std::vector<ojson> records;
  for (const auto& s : result.stats) {
    records.push_back({{"step", s.step},
                       {"mean_reward", s.mean_reward},
                       {"mean_kl", s.mean_kl},
                       {"objective", s.objective},
                       {"score_gap", s.score_gap}});
  }
  write_atomic(args.out, to_jsonl(records));
  out << to_report({{"command", "grpo demo"},
                    {"records", records.size()},
                    {"config", {{"grpo", grpo_json(args.cfg)},
                                {"weights", weights_json(args.weights)},
                                {"contexts", args.contexts}}}});
}

// data

struct PseudoScoreArgs {
  std::string frames, out;
  std::uint64_t seed = 0;
};

void cmd_pseudo_score(const PseudoScoreArgs& args, std::ostream& out) {
  const auto frames = ingest_frames(args.frames);
  std::vector<ojson> records;
  for (const auto& f : frames) {
    const std::size_t n = f.labels.distortion_count();
    const ScoreBand band = pseudo_score_band(n);
    records.push_back({{"frame_id", f.frame_id},
                       {"n_labels", n},
                       {"band", {band.lo, band.hi}},
                       {"score", sample_pseudo_score(n, args.seed ^ stable_hash(f.frame_id))}});
  }
  write_atomic(args.out, to_jsonl(records));
  out << to_report({{"command", "data pseudo-score"}, {"records", records.size()}, {"config", {{"seed", args.seed}}}});
}

struct FilterCotArgs {
  std::string candidates, frames, out, rejected;
  double iou_threshold = 0.5;
};

void cmd_filter_cot(const FilterCotArgs& args, std::ostream& out) {
  if (!(args.iou_threshold >= 0 && args.iou_threshold <= 1)) throw UsageError("IoU threshold must lie in [0, 1]");
  const auto frames = ingest_frames(args.frames);
  const auto candidates = ingest_cot_candidates(args.candidates);
  std::map<std::string, const FrameAnnotation*> by_id;
  for (const auto& f : frames) by_id.emplace(f.frame_id, &f);

  std::vector<IngestIssue> issues;
  for (const auto& c : candidates) {
    if (!by_id.count(c.frame_id)) {
      issues.push_back({IngestIssue::Kind::Schema, 0, "frame_id", "candidate for unknown frame \"" + c.frame_id + "\""});
    }
  }
  if (!issues.empty()) throw IngestError(args.candidates, std::move(issues));

  std::vector<ojson> kept, rejected;
  for (const auto& c : candidates) {
    const CotDecision d = filter_cot(c, *by_id.at(c.frame_id), args.iou_threshold);
    ojson rec = {{"frame_id", c.frame_id},
                 {"labels", labels_json(c.labels)},
                 {"bboxes", boxes_json(c.regions)},
                 {"reasoning", c.reasoning}};
    if (d.keep) {
      kept.push_back(std::move(rec));
    } else {
      rec["reasons"] = d.reasons;
      rejected.push_back(std::move(rec));
    }
  }
  write_atomic(args.out, to_jsonl(kept));
  if (!args.rejected.empty()) write_atomic(args.rejected, to_jsonl(rejected));
  out << to_report({{"command", "data filter-cot"},
                    {"kept", kept.size()},
                    {"rejected", rejected.size()},
                    {"config", {{"iou_threshold", args.iou_threshold}}}});
}

struct ValidateArgs {
  std::vector<std::string> pairs, frames, pair_predictions, frame_predictions, rollouts, candidates;
  std::string out;
};

// Returns true when every file ingested cleanly.
bool cmd_validate(const ValidateArgs& args, std::ostream& out) {
  ojson files = ojson::array();
  bool ok = true;
  const auto check = [&](const std::vector<std::string>& paths, const char* kind, auto&& loader) {
    for (const auto& path : paths) {
      ojson entry = {{"path", path}, {"kind", kind}};
      try {
        entry["records"] = loader(path).size();
        entry["errors"] = ojson::array();
      } catch (const IngestError& e) {
        ok = false;
        entry["records"] = nullptr;
        ojson errors = ojson::array();
        for (const auto& i : e.issues()) {
          errors.push_back({{"line", i.line}, {"field", i.field}, {"reason", i.reason}, {"message", i.to_string()}});
        }
        entry["errors"] = std::move(errors);
      }
      files.push_back(std::move(entry));
    }
  };
  check(args.pairs, "pairs", [](const std::string& p) { return ingest_pairs(p); });
  check(args.frames, "frames", [](const std::string& p) { return ingest_frames(p); });
  check(args.pair_predictions, "pair_predictions", [](const std::string& p) { return ingest_pair_predictions(p); });
  check(args.frame_predictions, "frame_predictions", [](const std::string& p) { return ingest_frame_predictions(p); });
  check(args.rollouts, "rollouts", [](const std::string& p) { return ingest_rollouts(p); });
  check(args.candidates, "cot_candidates", [](const std::string& p) { return ingest_cot_candidates(p); });
  if (files.empty()) throw UsageError("data validate: no input files given");

  const std::string text = to_report({{"ok", ok}, {"files", std::move(files)}});
  if (args.out.empty()) {
    out << text;
  } else {
    write_atomic(args.out, text);
  }
  return ok;
}

// score

struct ScoreArgs {
  std::string frames, pairs, mock, out, prompt = "preference";
  GenerationParams params;
  std::uint64_t seed = 0;
  long long connect_timeout_ms = 5000;
  long long read_timeout_ms = 120000;
  long long deadline_ms = 0;
  int max_attempts = 4;
  std::size_t max_image_bytes = kDefaultMaxImageBytes;
};

struct ScoreTarget {
  std::string id;
  std::optional<Side> side;
  std::string frame_ref;
};

void cmd_score(const ScoreArgs& args, int jobs, std::ostream& out) {
  if (args.frames.empty() == args.pairs.empty()) throw UsageError("score: give exactly one of --frames or --pairs");
  PromptKind kind;
  if (args.prompt == "preference") {
    kind = PromptKind::PreferenceScoring;
  } else if (args.prompt == "recognition") {
    kind = PromptKind::Recognition;
  } else {
    throw UsageError("score: --prompt must be preference or recognition");
  }

  std::vector<ScoreTarget> targets;
  const fs::path input = args.frames.empty() ? fs::path(args.pairs) : fs::path(args.frames);
  if (!args.frames.empty()) {
    for (const auto& f : ingest_frames(args.frames)) targets.push_back({f.frame_id, std::nullopt, f.frame_ref});
  } else {
    for (const auto& p : ingest_pairs(args.pairs)) {
      targets.push_back({p.pair_id, Side::A, p.a.frame_ref});
      targets.push_back({p.pair_id, Side::B, p.b.frame_ref});
    }
  }

  std::unique_ptr<Scorer> scorer;
  ojson endpoint_json;
  const bool mock = !args.mock.empty();
  if (mock) {
    scorer = std::make_unique<MockScorer>(ingest_frames(args.mock), args.seed);
    endpoint_json = {{"mode", "mock"}, {"fixture", args.mock}, {"seed", args.seed}};
  } else {
    EndpointConfig cfg;
    try {
      cfg = EndpointConfig::from_env();
    } catch (const GatewayError& e) {
      throw UsageError(std::string(e.what()) + " (or pass --mock)");
    }
    cfg.connect_timeout = std::chrono::milliseconds(args.connect_timeout_ms);
    cfg.read_timeout = std::chrono::milliseconds(args.read_timeout_ms);
    cfg.deadline = std::chrono::milliseconds(args.deadline_ms);
    cfg.max_attempts = args.max_attempts;
    cfg.max_image_bytes = args.max_image_bytes;
    endpoint_json = {{"mode", "endpoint"}, {"base_url", cfg.base_url}, {"max_attempts", cfg.max_attempts}};
    scorer = std::make_unique<HttpScorer>(std::move(cfg));
  }

  std::vector<ScoreRequest> requests;
  for (const auto& t : targets) {
    const std::string rid = t.side ? t.id + "/" + side_name(*t.side) : t.id;
    std::string ref = t.frame_ref;
    // Local frame paths in the input are relative to the input file.
    if (!mock && !ref.starts_with("http://") && !ref.starts_with("https://") && fs::path(ref).is_relative()) {
      ref = (input.parent_path() / ref).string();
    }
    ScoreRequest req = make_score_request(rid, kind, ref, args.params, !mock, args.max_image_bytes);
    if (mock) req.frame_ref = t.frame_ref;
    requests.push_back(std::move(req));
  }

  const auto outcomes = score_all(*scorer, requests, jobs);
  std::vector<ojson> records;
  std::vector<std::string> failures;
  std::exception_ptr first_error;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].error) {
      if (!first_error) first_error = outcomes[i].error;
      try {
        std::rethrow_exception(outcomes[i].error);
      } catch (const std::exception& e) {
        failures.push_back(requests[i].request_id + ": " + e.what());
      }
      continue;
    }
    const auto& t = targets[i];
    const auto& resp = *outcomes[i].response;
    for (std::size_t k = 0; k < resp.raw_texts.size(); ++k) {
      ojson rec;
      if (t.side) {
        rec["pair_id"] = t.id;
        rec["side"] = side_name(*t.side);
      } else {
        rec["frame_id"] = t.id;
      }
      rec["rollout_index"] = k;
      rec["text"] = resp.raw_texts[k];
      rec["model_id"] = resp.model_id;
      records.push_back(std::move(rec));
    }
  }
  if (first_error) {
    std::string msg = std::to_string(failures.size()) + " request(s) failed";
    for (const auto& f : failures) msg += "\n  " + f;
    try {
      std::rethrow_exception(first_error);
    } catch (const UnknownFrame&) {
      throw UsageError(msg);
    } catch (const GatewayError&) {
      throw GatewayError(msg);
    }
  }
  write_atomic(args.out, to_jsonl(records));
  out << to_report({{"command", "score"},
                    {"records", records.size()},
                    {"config", {{"endpoint", endpoint_json},
                                {"prompt", args.prompt},
                                {"max_tokens", args.params.max_tokens},
                                {"temperature", args.params.temperature},
                                {"n_samples", args.params.n_samples}}}});
}

// parse

struct ParseArgs {
  std::string rollouts, out, predictions;
  double score_fallback = 1.0;
};

void cmd_parse(const ParseArgs& args, std::ostream& out) {
  const auto rollouts = ingest_rollouts(args.rollouts);
  std::vector<ojson> records;
  // First rollout (lowest index) per frame or per pair side feeds the predictions file.
  std::map<std::string, std::pair<int, ParsedResponse>> first_frame;
  std::map<std::string, std::array<std::optional<std::pair<int, double>>, 2>> first_pair;
  std::vector<std::string> frame_order, pair_order;

  for (const auto& r : rollouts) {
    const ParsedResponse parsed = parse_answer(r.text);
    ojson rec;
    if (r.side) {
      rec["rollout_ref"] = r.pair_id + "/" + side_name(*r.side) + "#" + std::to_string(r.rollout_index);
      rec["pair_id"] = r.pair_id;
      rec["side"] = side_name(*r.side);
      auto [it, inserted] = first_pair.try_emplace(r.pair_id);
      if (inserted) pair_order.push_back(r.pair_id);
      auto& slot = it->second[static_cast<std::size_t>(*r.side)];
      if (!slot || r.rollout_index < slot->first) slot = {r.rollout_index, effective_score(parsed, args.score_fallback)};
    } else {
      rec["rollout_ref"] = r.frame_id + "#" + std::to_string(r.rollout_index);
      rec["frame_id"] = r.frame_id;
      auto it = first_frame.find(r.frame_id);
      if (it == first_frame.end()) {
        frame_order.push_back(r.frame_id);
        first_frame.emplace(r.frame_id, std::make_pair(r.rollout_index, parsed));
      } else if (r.rollout_index < it->second.first) {
        it->second = {r.rollout_index, parsed};
      }
    }
    rec["format_ok"] = parsed.format_ok;
    rec["labels"] = labels_json(parsed.labels);
    rec["rating"] = optional_number(parsed.rating);
    ojson diags = ojson::array();
    for (const auto& d : parsed.diagnostics) diags.push_back(d.to_string());
    rec["diagnostics"] = std::move(diags);
    records.push_back(std::move(rec));
  }

  std::vector<ojson> predictions;
  if (!args.predictions.empty()) {
    for (const auto& id : frame_order) {
      const auto& parsed = first_frame.at(id).second;
      predictions.push_back(
          {{"frame_id", id}, {"labels", labels_json(parsed.labels)}, {"rating", optional_number(parsed.rating)}});
    }
    for (const auto& id : pair_order) {
      const auto& sides = first_pair.at(id);
      if (!sides[0] || !sides[1]) throw UsageError("pair \"" + id + "\" lacks a rollout for one side");
      predictions.push_back({{"pair_id", id}, {"score_a", sides[0]->second}, {"score_b", sides[1]->second}});
    }
  }
  write_atomic(args.out, to_jsonl(records));
  if (!args.predictions.empty()) write_atomic(args.predictions, to_jsonl(predictions));
  out << to_report({{"command", "parse"},
                    {"records", records.size()},
                    {"predictions", predictions.size()},
                    {"config", {{"score_fallback", args.score_fallback}}}});
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frame distortion reward toolkit"};
  app.set_config("--config", "", "TOML-style key = value file; [section] names the subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  int jobs = 4;
  app.add_option("--jobs", jobs, "Worker threads for scoring and reward computation")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  RewardArgs reward;
  auto* reward_cmd = app.add_subcommand("reward", "Composite rewards for paired rollouts");
  reward_cmd->add_option("--pairs", reward.pairs, "pairs.jsonl")->required();
  reward_cmd->add_option("--rollouts", reward.rollouts, "rollouts.jsonl with pair_id and side")->required();
  reward_cmd->add_option("--out", reward.out, "Output rewards.jsonl")->required();
  reward_cmd->add_option("--score-fallback", reward.score_fallback, "Score used when a rollout has no rating")
      ->capture_default_str();
  reward_cmd->add_option("--std-floor", reward.std_floor, "Floor on the group standard deviation")
      ->capture_default_str();
  add_weight_options(reward_cmd, reward.weights);

  auto* bench_cmd = app.add_subcommand("bench", "Benchmark metrics");
  bench_cmd->require_subcommand(1);
  BenchPrefArgs bench_pref;
  auto* pref_cmd = bench_cmd->add_subcommand("pref", "Preference accuracy with and without ties");
  pref_cmd->add_option("--pairs", bench_pref.pairs, "pairs.jsonl")->required();
  pref_cmd->add_option("--predictions", bench_pref.predictions, "Pair predictions")->required();
  pref_cmd->add_option("--tie-threshold", bench_pref.tie_threshold, "Score gap below which a pair is a tie")
      ->capture_default_str();
  pref_cmd->add_option("--out", bench_pref.out, "Report path (default stdout)");
  BenchFramesArgs bench_frames;
  auto* frames_cmd = bench_cmd->add_subcommand("frames", "Recognition precision, recall and F1");
  frames_cmd->add_option("--frames", bench_frames.frames, "frames.jsonl")->required();
  frames_cmd->add_option("--predictions", bench_frames.predictions, "Frame predictions")->required();
  frames_cmd->add_option("--out", bench_frames.out, "Report path (default stdout)");

  auto* sample_cmd = app.add_subcommand("sample", "Frame sampling");
  sample_cmd->require_subcommand(1);
  SamplePlanArgs plan;
  auto* plan_cmd = sample_cmd->add_subcommand("plan", "Two-stage sampling plan from stage-1 scores");
  plan_cmd->add_option("--scores", plan.scores, "JSON {\"scores\": {\"index\": score}}")->required();
  plan_cmd->add_option("--out", plan.out, "Plan path (default stdout)");
  plan_cmd->add_option("--video-id", plan.video_id, "Overrides video_id from the scores file");
  plan_cmd->add_option("--fps", plan.cfg.video_fps, "Video frame rate")->capture_default_str();
  plan_cmd->add_option("--n-frames", plan.cfg.n_frames, "Frames in the video")->capture_default_str();
  plan_cmd->add_option("--budget", plan.cfg.budget, "Frames per stage")->capture_default_str();
  plan_cmd->add_option("--high-threshold", plan.cfg.high_threshold)->capture_default_str();
  plan_cmd->add_option("--low-threshold", plan.cfg.low_threshold)->capture_default_str();
  plan_cmd->add_option("--seed", plan.cfg.seed)->capture_default_str();

  auto* grpo_cmd = app.add_subcommand("grpo", "Toy policy training");
  grpo_cmd->require_subcommand(1);
  GrpoDemoArgs demo;
  auto* demo_cmd = grpo_cmd->add_subcommand("demo", "Train the toy policy on the always-A-wins fixture");
  demo_cmd->add_option("--out", demo.out, "Per-step stats JSONL")->required();
  demo_cmd->add_option("--group-size", demo.cfg.group_size)->capture_default_str();
  demo_cmd->add_option("--clip-eps", demo.cfg.clip_eps)->capture_default_str();
  demo_cmd->add_option("--kl-beta", demo.cfg.kl_beta)->capture_default_str();
  demo_cmd->add_option("--std-floor", demo.cfg.std_floor)->capture_default_str();
  demo_cmd->add_option("--learning-rate", demo.cfg.learning_rate)->capture_default_str();
  demo_cmd->add_option("--steps", demo.cfg.steps)->capture_default_str();
  demo_cmd->add_option("--seed", demo.cfg.seed)->capture_default_str();
  demo_cmd->add_option("--contexts", demo.contexts, "Number of pair contexts")->capture_default_str();
  add_weight_options(demo_cmd, demo.weights);

  auto* data_cmd = app.add_subcommand("data", "Dataset utilities");
  data_cmd->require_subcommand(1);
  PseudoScoreArgs pseudo;
  auto* pseudo_cmd = data_cmd->add_subcommand("pseudo-score", "Assign band-consistent pseudo-scores");
  pseudo_cmd->add_option("--frames", pseudo.frames, "frames.jsonl")->required();
  pseudo_cmd->add_option("--out", pseudo.out, "Output JSONL")->required();
  pseudo_cmd->add_option("--seed", pseudo.seed)->capture_default_str();
  FilterCotArgs cot;
  auto* cot_cmd = data_cmd->add_subcommand("filter-cot", "Keep reasoning samples that match annotations");
  cot_cmd->add_option("--candidates", cot.candidates, "Candidate JSONL")->required();
  cot_cmd->add_option("--frames", cot.frames, "Ground-truth frames.jsonl")->required();
  cot_cmd->add_option("--out", cot.out, "Kept candidates")->required();
  cot_cmd->add_option("--rejected", cot.rejected, "Rejected candidates with reasons");
  cot_cmd->add_option("--iou-threshold", cot.iou_threshold)->capture_default_str();
  ValidateArgs validate;
  auto* validate_cmd = data_cmd->add_subcommand("validate", "Check JSONL files against their schemas");
  validate_cmd->add_option("--pairs", validate.pairs);
  validate_cmd->add_option("--frames", validate.frames);
  validate_cmd->add_option("--pair-predictions", validate.pair_predictions);
  validate_cmd->add_option("--frame-predictions", validate.frame_predictions);
  validate_cmd->add_option("--rollouts", validate.rollouts);
  validate_cmd->add_option("--cot-candidates", validate.candidates);
  validate_cmd->add_option("--out", validate.out, "Report path (default stdout)");

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Generate rollouts from a scorer endpoint or the mock");
  score_cmd->add_option("--frames", score.frames, "frames.jsonl to score");
  score_cmd->add_option("--pairs", score.pairs, "pairs.jsonl to score, both sides");
  score_cmd->add_option("--mock", score.mock, "Answer from this annotated frames.jsonl instead of an endpoint");
  score_cmd->add_option("--out", score.out, "Output rollouts.jsonl")->required();
  score_cmd->add_option("--prompt", score.prompt, "preference or recognition")->capture_default_str();
  score_cmd->add_option("--n-samples", score.params.n_samples)->capture_default_str()->check(CLI::PositiveNumber);
  score_cmd->add_option("--max-tokens", score.params.max_tokens)->capture_default_str()->check(CLI::PositiveNumber);
  score_cmd->add_option("--temperature", score.params.temperature)->capture_default_str();
  score_cmd->add_option("--seed", score.seed, "Mock scorer seed")->capture_default_str();
  score_cmd->add_option("--connect-timeout-ms", score.connect_timeout_ms)->capture_default_str();
  score_cmd->add_option("--read-timeout-ms", score.read_timeout_ms)->capture_default_str();
  score_cmd->add_option("--deadline-ms", score.deadline_ms, "Per-request budget including retries; 0 disables")
      ->capture_default_str();
  score_cmd->add_option("--max-attempts", score.max_attempts)->capture_default_str()->check(CLI::PositiveNumber);
  score_cmd->add_option("--max-image-bytes", score.max_image_bytes)->capture_default_str();

  ParseArgs parse;
  auto* parse_cmd = app.add_subcommand("parse", "Parse rollout texts into labels and ratings");
  parse_cmd->add_option("--rollouts", parse.rollouts, "rollouts.jsonl")->required();
  parse_cmd->add_option("--out", parse.out, "Parsed records JSONL")->required();
  parse_cmd->add_option("--predictions", parse.predictions, "Also write predictions for the bench commands");
  parse_cmd->add_option("--score-fallback", parse.score_fallback)->capture_default_str();

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("fdreward");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*reward_cmd) {
      cmd_reward(reward, jobs, out);
    } else if (*pref_cmd) {
      cmd_bench_pref(bench_pref, out);
    } else if (*frames_cmd) {
      cmd_bench_frames(bench_frames, out);
    } else if (*plan_cmd) {
      cmd_sample_plan(plan, out);
    } else if (*demo_cmd) {
      cmd_grpo_demo(demo, out);
    } else if (*pseudo_cmd) {
      cmd_pseudo_score(pseudo, out);
    } else if (*cot_cmd) {
      cmd_filter_cot(cot, out);
    } else if (*validate_cmd) {
      if (!cmd_validate(validate, out)) return kExitInput;
    } else if (*score_cmd) {
      cmd_score(score, jobs, out);
    } else if (*parse_cmd) {
      cmd_parse(parse, out);
    }
  } catch (const GatewayError& e) {
    // PayloadTooLarge is a property of the input, not of the endpoint.
    if (dynamic_cast<const PayloadTooLarge*>(&e)) {
      err << "error: " << e.what() << "\n";
      return kExitInput;
    }
    err << "endpoint error: " << e.what() << "\n";
    return kExitEndpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace fdreward
