#include "doctest.h"

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "fdreward/dataset.hpp"
#include "fdreward/jsonl.hpp"

using namespace fdreward;
namespace fs = std::filesystem;

namespace {

const fs::path kData = FDREWARD_TEST_DATA;

// A scratch file removed at scope exit.
struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& content) {
    static int counter = 0;
    path = fs::temp_directory_path() / ("fdreward_dataset_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".jsonl");
    std::ofstream(path) << content;
  }
  ~TempFile() { fs::remove(path); }
};

const char* kPairLine =
    R"({"pair_id":"%s","a":{"frame":"a.png","labels":["no issue"]},"b":{"frame":"b.png","labels":["motion blur"],"bboxes":{"motion blur":[[0,0,5,5]]}},"preference":"A"})";

std::string pair_line(const std::string& id) {
  char buf[512];
  std::snprintf(buf, sizeof buf, kPairLine, id.c_str());
  return std::string(buf) + "\n";
}

template <typename F>
IngestError expect_ingest_error(F&& f) {
  try {
    f();
  } catch (const IngestError& e) {
    return e;
  }
  FAIL("expected IngestError");
  return IngestError("", {});
}

}  // namespace

TEST_CASE("happy path") {
  TempFile f(pair_line("x") + pair_line("y") + "\n" + pair_line("z"));
  const auto pairs = ingest_pairs(f.path);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0].pair_id == "x");
  CHECK(pairs[0].a.frame_id == "x/A");
  CHECK(pairs[0].a.labels.is_clean());
  CHECK(pairs[0].b.labels.contains(DistortionLabel::MotionBlur));
  CHECK(pairs[0].gt_pref == Preference::AWins);
}

TEST_CASE("shipped fixtures load") {
  CHECK(ingest_pairs(kData / "pairs10.jsonl").size() == 10);
  CHECK(ingest_pairs(kData / "pairs100.jsonl").size() == 100);
  CHECK(ingest_frames(kData / "frames200.jsonl").size() == 200);
  CHECK(ingest_rollouts(kData / "rollouts10.jsonl").size() == 80);
  CHECK(ingest_cot_candidates(kData / "cot20.jsonl").size() == 20);
}

TEST_CASE("four ground-truth labels are rejected") {
  TempFile f(pair_line("ok") +
             R"({"frame_id":"f","frame":"f.png","labels":["motion blur","extra limbs","limb deformation","torso deformation"]})"
             "\n");
  const auto e = expect_ingest_error([&] { ingest_frames(f.path); });
  // The first line is not a frame record either, so both lines are reported.
  REQUIRE(e.issues().size() == 2);
  CHECK(e.issues()[1].line == 2);
  CHECK(e.issues()[1].field == "labels");
  CHECK(e.issues()[1].reason.find("at most three issue labels") != std::string::npos);
}

TEST_CASE("duplicate ids") {
  TempFile f(pair_line("x") + pair_line("y") + pair_line("x"));
  const auto e = expect_ingest_error([&] { ingest_pairs(f.path); });
  REQUIRE(e.issues().size() == 1);
  CHECK(e.issues()[0].kind == IngestIssue::Kind::DuplicateId);
  CHECK(e.issues()[0].line == 3);
}

TEST_CASE("errors name line and field, load is all or nothing") {
  TempFile f(pair_line("x") +
             R"({"pair_id":"y","a":{"frame":"a.png","labels":["bogus"]},"b":{"frame":"b.png","labels":[]},"preference":"A"})"
             "\n" +
             R"({"pair_id":"z","a":{"frame":"a.png","labels":[]},"b":{"frame":"b.png","labels":[]},"preference":"maybe"})"
             "\n" + "not json\n" +
             R"({"pair_id":"w","a":{"frame":"a.png","labels":["motion blur"],"width":10,"height":10,"bboxes":{"motion blur":[[0,0,20,5]]}},"b":{"frame":"b.png","labels":[]},"preference":"TIE"})"
             "\n");
  const auto e = expect_ingest_error([&] { ingest_pairs(f.path); });
  REQUIRE(e.issues().size() == 4);
  CHECK(e.issues()[0].line == 2);
  CHECK(e.issues()[0].field == "a.labels");
  CHECK(e.issues()[1].line == 3);
  CHECK(e.issues()[1].field == "preference");
  CHECK(e.issues()[2].line == 4);
  CHECK(e.issues()[3].line == 5);
  CHECK(e.issues()[3].field == "a.bboxes.motion blur");
  CHECK(std::string(e.what()).find("line 3 field preference") != std::string::npos);
}

TEST_CASE("missing file is an Io issue") {
  const auto e = expect_ingest_error([] { ingest_frames("/nonexistent/frames.jsonl"); });
  REQUIRE(e.issues().size() == 1);
  CHECK(e.issues()[0].kind == IngestIssue::Kind::Io);
}

TEST_CASE("rollout records") {
  TempFile f(R"({"pair_id":"p","side":"A","rollout_index":0,"text":"t"})"
             "\n"
             R"({"frame_id":"f","rollout_index":3,"text":"u"})"
             "\n");
  const auto r = ingest_rollouts(f.path);
  REQUIRE(r.size() == 2);
  CHECK(r[0].side == Side::A);
  CHECK(r[1].frame_id == "f");
  CHECK(r[1].rollout_index == 3);

  TempFile bad(R"({"pair_id":"p","side":"C","rollout_index":-1,"text":"t"})"
               "\n");
  const auto e = expect_ingest_error([&] { ingest_rollouts(bad.path); });
  CHECK(e.issues()[0].field == "side");
}

TEST_CASE("cot candidates must not box unpredicted labels") {
  TempFile f(R"({"frame_id":"f","labels":["motion blur"],"bboxes":{"extra limbs":[[0,0,1,1]]}})"
             "\n");
  const auto e = expect_ingest_error([&] { ingest_cot_candidates(f.path); });
  CHECK(e.issues()[0].field == "bboxes");
}
