#include "fdreward/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "json.hpp"
#include "fdreward/jsonl.hpp"

namespace fdreward {

namespace {

using nlohmann::json;

// Aborts the current line after its issue has been recorded.
struct LineFailed {};

class LineReader {
 public:
  LineReader(std::size_t line, std::vector<IngestIssue>& issues) : line_(line), issues_(issues) {}

  [[noreturn]] void fail(const std::string& field, const std::string& reason) {
    issues_.push_back({IngestIssue::Kind::Schema, line_, field, reason});
    throw LineFailed{};
  }

  const json& require(const json& obj, const std::string& key, const std::string& prefix = "") {
    const auto it = obj.find(key);
    if (it == obj.end()) fail(prefix + key, "missing field");
    return *it;
  }

  std::string string_field(const json& obj, const std::string& key, const std::string& prefix = "") {
    const json& v = require(obj, key, prefix);
    if (!v.is_string()) fail(prefix + key, "expected a string");
    return v.get<std::string>();
  }

  double number_field(const json& obj, const std::string& key, const std::string& prefix = "") {
    const json& v = require(obj, key, prefix);
    if (!v.is_number()) fail(prefix + key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(prefix + key, "expected a finite number");
    return x;
  }

  LabelSet labels(const json& obj, LabelRole role, const std::string& prefix = "") {
    const json& v = require(obj, "labels", prefix);
    if (!v.is_array()) fail(prefix + "labels", "expected a list of label strings");
    std::vector<std::string> names;
    for (const auto& e : v) {
      if (!e.is_string()) fail(prefix + "labels", "expected a list of label strings");
      names.push_back(e.get<std::string>());
    }
    try {
      return parse_label_set(names, role);
    } catch (const InvalidAnnotation& e) {
      fail(prefix + "labels", e.what());
    }
  }

  BoxMap boxes(const json& obj, const std::string& key, const std::string& prefix,
               std::optional<std::pair<double, double>> dims) {
    BoxMap out;
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return out;
    if (!it->is_object()) fail(prefix + key, "expected an object mapping label to boxes");
    for (const auto& [name, list] : it->items()) {
      const std::string field = prefix + key + "." + name;
      const auto label = parse_label(name);
      if (!label) fail(field, "unknown label \"" + name + "\"");
      if (!list.is_array()) fail(field, "expected a list of [x1, y1, x2, y2] boxes");
      auto& dest = out[*label];
      for (const auto& box : list) {
        if (!box.is_array() || box.size() != 4 ||
            !std::all_of(box.begin(), box.end(), [](const json& c) { return c.is_number(); })) {
          fail(field, "each box must be [x1, y1, x2, y2]");
        }
        try {
          BoundingBox b(box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>());
          if (dims && !b.fits_within(dims->first, dims->second)) fail(field, "box exceeds frame dimensions");
          dest.push_back(b);
        } catch (const InvalidAnnotation& e) {
          fail(field, e.what());
        }
      }
    }
    return out;
  }

  FrameAnnotation annotation(const json& obj, const std::string& id, const std::string& frame_key,
                             const std::string& prefix) {
    FrameAnnotation a;
    a.frame_id = id;
    a.frame_ref = string_field(obj, frame_key, prefix);
    a.labels = labels(obj, LabelRole::GroundTruth, prefix);
    std::optional<std::pair<double, double>> dims;
    if (obj.contains("width") || obj.contains("height")) {
      dims = std::make_pair(number_field(obj, "width", prefix), number_field(obj, "height", prefix));
    }
    a.boxes = boxes(obj, "bboxes", prefix, dims);
    try {
      a.validate();
    } catch (const InvalidAnnotation& e) {
      fail(prefix + "bboxes", e.what());
    }
    return a;
  }

 private:
  std::size_t line_;
  std::vector<IngestIssue>& issues_;
};

// Reads every line with `parse`, collecting issues; throws if any were found.
template <typename Record>
std::vector<Record> ingest(const std::filesystem::path& path,
                           const std::function<Record(const json&, LineReader&)>& parse,
                           const std::function<std::string(const Record&)>& key) {
  std::vector<IngestIssue> issues;
  std::vector<JsonlLine> lines;
  try {
    lines = read_jsonl(path);
  } catch (const IoError& e) {
    throw IngestError(path.string(), {{IngestIssue::Kind::Io, 0, "", e.what()}});
  }
  std::vector<Record> out;
  std::set<std::string> seen;
  for (const auto& line : lines) {
    LineReader reader(line.line_no, issues);
    json obj = json::parse(line.text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      issues.push_back({IngestIssue::Kind::Schema, line.line_no, "", "line is not a JSON object"});
      continue;
    }
    try {
      Record r = parse(obj, reader);
      const std::string k = key(r);
      if (!seen.insert(k).second) {
        issues.push_back({IngestIssue::Kind::DuplicateId, line.line_no, "", "duplicate id \"" + k + "\""});
        continue;
      }
      out.push_back(std::move(r));
    } catch (const LineFailed&) {
    }
  }
  if (!issues.empty()) throw IngestError(path.string(), std::move(issues));
  return out;
}

std::optional<Side> parse_side(const std::string& s) {
  if (s == "A" || s == "a") return Side::A;
  if (s == "B" || s == "b") return Side::B;
  return std::nullopt;
}

}  // namespace

std::string IngestIssue::to_string() const {
  std::string kind_name = kind == Kind::Io ? "Io" : kind == Kind::Schema ? "Schema" : "DuplicateId";
  std::string out = kind_name;
  if (line > 0) out += " line " + std::to_string(line);
  if (!field.empty()) out += " field " + field;
  return out + ": " + reason;
}

IngestError::IngestError(std::string path, std::vector<IngestIssue> issues)
    : std::runtime_error([&] {
        std::string msg = path + ": " + std::to_string(issues.size()) + " error(s)";
        for (const auto& i : issues) msg += "\n  " + i.to_string();
        return msg;
      }()),
      path_(std::move(path)),
      issues_(std::move(issues)) {}

std::vector<FramePairRecord> ingest_pairs(const std::filesystem::path& path) {
  return ingest<FramePairRecord>(
      path,
      [](const json& obj, LineReader& r) {
        FramePairRecord rec;
        rec.pair_id = r.string_field(obj, "pair_id");
        rec.prompt = obj.contains("prompt") ? r.string_field(obj, "prompt") : std::string();
        const json& a = r.require(obj, "a");
        const json& b = r.require(obj, "b");
        if (!a.is_object()) r.fail("a", "expected an object");
        if (!b.is_object()) r.fail("b", "expected an object");
        rec.a = r.annotation(a, rec.pair_id + "/A", "frame", "a.");
        rec.b = r.annotation(b, rec.pair_id + "/B", "frame", "b.");
        const std::string pref = r.string_field(obj, "preference");
        try {
          rec.gt_pref = parse_preference(pref);
        } catch (const std::invalid_argument& e) {
          r.fail("preference", e.what());
        }
        return rec;
      },
      [](const FramePairRecord& rec) { return rec.pair_id; });
}

std::vector<FrameAnnotation> ingest_frames(const std::filesystem::path& path) {
  return ingest<FrameAnnotation>(
      path,
      [](const json& obj, LineReader& r) {
        const std::string id = r.string_field(obj, "frame_id");
        return r.annotation(obj, id, "frame", "");
      },
      [](const FrameAnnotation& a) { return a.frame_id; });
}

std::vector<PairPrediction> ingest_pair_predictions(const std::filesystem::path& path) {
  return ingest<PairPrediction>(
      path,
      [](const json& obj, LineReader& r) {
        PairPrediction p;
        p.pair_id = r.string_field(obj, "pair_id");
        p.score_a = r.number_field(obj, "score_a");
        p.score_b = r.number_field(obj, "score_b");
        return p;
      },
      [](const PairPrediction& p) { return p.pair_id; });
}

std::vector<FramePrediction> ingest_frame_predictions(const std::filesystem::path& path) {
  return ingest<FramePrediction>(
      path,
      [](const json& obj, LineReader& r) {
        FramePrediction p;
        p.frame_id = r.string_field(obj, "frame_id");
        p.labels = r.labels(obj, LabelRole::Prediction);
        if (const auto it = obj.find("rating"); it != obj.end() && !it->is_null()) {
          p.rating = r.number_field(obj, "rating");
        }
        return p;
      },
      [](const FramePrediction& p) { return p.frame_id; });
}

std::vector<RolloutRecord> ingest_rollouts(const std::filesystem::path& path) {
  return ingest<RolloutRecord>(
      path,
      [](const json& obj, LineReader& r) {
        RolloutRecord rec;
        if (obj.contains("pair_id")) {
          rec.pair_id = r.string_field(obj, "pair_id");
          rec.side = parse_side(r.string_field(obj, "side"));
          if (!rec.side) r.fail("side", "expected \"A\" or \"B\"");
        } else if (obj.contains("frame_id")) {
          rec.frame_id = r.string_field(obj, "frame_id");
        } else {
          r.fail("pair_id", "missing field (or frame_id)");
        }
        const json& idx = r.require(obj, "rollout_index");
        if (!idx.is_number_integer() || idx.get<long long>() < 0) r.fail("rollout_index", "expected an integer >= 0");
        rec.rollout_index = static_cast<int>(idx.get<long long>());
        rec.text = r.string_field(obj, "text");
        return rec;
      },
      [](const RolloutRecord& rec) {
        if (rec.side) return rec.pair_id + "/" + (*rec.side == Side::A ? "A" : "B") + "#" + std::to_string(rec.rollout_index);
        return rec.frame_id + "#" + std::to_string(rec.rollout_index);
      });
}

std::vector<CotCandidate> ingest_cot_candidates(const std::filesystem::path& path) {
  return ingest<CotCandidate>(
      path,
      [](const json& obj, LineReader& r) {
        CotCandidate c;
        c.frame_id = r.string_field(obj, "frame_id");
        c.labels = r.labels(obj, LabelRole::Prediction);
        c.regions = r.boxes(obj, "bboxes", "", std::nullopt);
        for (const auto& [label, list] : c.regions) {
          if (!c.labels.contains(label)) r.fail("bboxes", "region given for a label that was not predicted");
        }
        if (obj.contains("reasoning")) c.reasoning = r.string_field(obj, "reasoning");
        return c;
      },
      [](const CotCandidate& c) { return c.frame_id; });
}

}  // namespace fdreward
