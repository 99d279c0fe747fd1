#include <string>

#include "doctest.h"
#include "test_support.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/manifest.hpp"
#include "vidcl/rng.hpp"

using namespace vidcl;
using namespace vidcl::data;

namespace {

std::string header(const std::string& trim_mode,
                   const std::string& classes = R"(["a","b","c"])") {
  return R"({"name":"toy","class_names":)" + classes + R"(,"trim_mode":")" +
         trim_mode + "\"}\n";
}

std::string record_line(const std::string& id, int total,
                        const std::string& segments,
                        const std::string& partition = "train") {
  return R"({"video_id":")" + id + R"(","total_frames":)" + std::to_string(total) +
         R"(,"partition":")" + partition + R"(","segments":)" + segments +
         R"(,"frame_source":"dir:/nowhere"})" + "\n";
}

}  // namespace

TEST_CASE("load_manifest round-trips a well-formed file") {
  const std::string text = header("trimmed") +
                           record_line("v0", 10, R"([{"start":0,"end":10,"class":0}])") +
                           record_line("v1", 20, R"([{"start":0,"end":20,"class":1}])", "val") +
                           record_line("v2", 30, R"([{"start":0,"end":30,"class":2}])", "test");
  const auto m = parse_manifest(text);
  CHECK(m.records.size() == 3);
  CHECK(m.records[0].class_id == 0);  // derived from the whole-video extent
  CHECK(m.records[1].partition == Partition::val);
  CHECK(m.trim_mode == TrimMode::trimmed);

  const auto again = parse_manifest(serialize_manifest(m));
  CHECK(again.records == m.records);
  CHECK(again.class_names == m.class_names);
}

TEST_CASE("load_manifest reports parse errors with the line number") {
  const std::string text = header("trimmed") + "{not json\n";
  CHECK_THROWS_WITH_AS(parse_manifest(text), doctest::Contains("line 2"), DataError);
}

TEST_CASE("segment past the end of the video names the record") {
  const std::string text =
      header("untrimmed") + record_line("bad", 10, R"([{"start":0,"end":11,"class":0}])");
  CHECK_THROWS_WITH_AS(parse_manifest(text), doctest::Contains("bad"), DataError);
}

TEST_CASE("duplicate video ids are rejected by name") {
  const std::string text = header("untrimmed") +
                           record_line("dup", 10, R"([{"start":0,"end":5,"class":0}])") +
                           record_line("dup", 10, R"([{"start":0,"end":5,"class":0}])");
  CHECK_THROWS_WITH_AS(parse_manifest(text), doctest::Contains("dup"), DataError);
}

TEST_CASE("assign_untrimmed_labels keeps single-label and drops multi-label records") {
  const std::string text =
      header("untrimmed") +
      record_line("single", 400,
                  R"([{"start":0,"end":100,"class":0},{"start":150,"end":400,"class":0}])") +
      record_line("multi", 400,
                  R"([{"start":0,"end":100,"class":0},{"start":150,"end":400,"class":1}])");
  const auto result = assign_untrimmed_labels(parse_manifest(text));
  REQUIRE(result.manifest.records.size() == 1);
  CHECK(result.manifest.records[0].video_id == "single");
  CHECK(result.manifest.records[0].class_id == 0);
  CHECK(result.discarded_count == 1);
  CHECK(result.discarded_fraction == doctest::Approx(0.5));
}

TEST_CASE("discard fraction on a crafted 1000-record manifest is 0.002") {
  DatasetManifest m;
  m.name = "crafted";
  m.class_names = {"a", "b"};
  m.trim_mode = TrimMode::untrimmed;
  for (int i = 0; i < 1000; ++i) {
    VideoRecord r;
    r.video_id = "v" + std::to_string(i);
    r.total_frames = 100;
    r.partition = Partition::train;
    r.frame_source = "dir:/nowhere";
    if (i < 2)
      r.segments = {{0, 40, 0}, {50, 100, 1}};  // two labels
    else
      r.segments = {{0, 100, i % 2}};
    m.records.push_back(std::move(r));
  }
  const auto result = assign_untrimmed_labels(m);
  CHECK(result.discarded_count == 2);
  CHECK(result.discarded_fraction == doctest::Approx(0.002));

  // verified against a direct scan
  int multi = 0;
  for (const auto& r : m.records) {
    bool two = false;
    for (const auto& s : r.segments) two = two || s.class_id != r.segments[0].class_id;
    multi += two ? 1 : 0;
  }
  CHECK(multi == result.discarded_count);
}

TEST_CASE("assign_untrimmed_labels is idempotent") {
  const std::string text =
      header("untrimmed") +
      record_line("a", 50, R"([{"start":0,"end":10,"class":0},{"start":20,"end":50,"class":0}])") +
      record_line("b", 50, R"([{"start":0,"end":10,"class":1},{"start":20,"end":50,"class":1}])");
  const auto once = assign_untrimmed_labels(parse_manifest(text));
  const auto twice = assign_untrimmed_labels(once.manifest);
  CHECK(twice.discarded_count == 0);
  CHECK(twice.manifest.records == once.manifest.records);
}

TEST_CASE("zero-segment records cannot take a primary label") {
  const std::string text = header("untrimmed") + record_line("empty", 10, "[]");
  CHECK_THROWS_AS(assign_untrimmed_labels(parse_manifest(text)), DataError);
}

TEST_CASE("trim_manifest expands segments into independent records") {
  const std::string text =
      header("untrimmed") +
      record_line("p", 400,
                  R"([{"start":0,"end":100,"class":0},{"start":150,"end":400,"class":0}])");
  const auto trimmed = trim_manifest(parse_manifest(text));
  REQUIRE(trimmed.records.size() == 2);
  CHECK(trimmed.trim_mode == TrimMode::trimmed);
  CHECK(trimmed.records[0].video_id == "p#0");
  CHECK(trimmed.records[1].video_id == "p#1");
  CHECK(trimmed.records[0].total_frames == 100);
  CHECK(trimmed.records[1].total_frames == 250);
  CHECK(trimmed.records[0].class_id == 0);
  // children address parent frames through an offset suffix
  CHECK(trimmed.records[1].frame_source == "dir:/nowhere#150");
}

TEST_CASE("trim of a mid-video segment keeps segment length as total_frames") {
  const std::string text =
      header("untrimmed") + record_line("p", 400, R"([{"start":10,"end":50,"class":0}])");
  const auto trimmed = trim_manifest(parse_manifest(text));
  REQUIRE(trimmed.records.size() == 1);
  CHECK(trimmed.records[0].total_frames == 40);  // 50 - 10
}

TEST_CASE("trim_manifest conserves labeled frames") {
  Rng rng(99);
  DatasetManifest m;
  m.name = "conserve";
  m.class_names = {"a", "b", "c"};
  m.trim_mode = TrimMode::untrimmed;
  long long labeled_frames = 0;
  for (int i = 0; i < 50; ++i) {
    VideoRecord r;
    r.video_id = "v" + std::to_string(i);
    r.total_frames = 500;
    r.partition = Partition::train;
    r.frame_source = "dir:/nowhere";
    long long cursor = 0;
    const int segs = 1 + static_cast<int>(rng.next_below(4));
    const int cls = static_cast<int>(rng.next_below(3));
    for (int s = 0; s < segs && cursor < 480; ++s) {
      const long long start = cursor + static_cast<long long>(rng.next_below(10));
      const long long end =
          std::min<long long>(start + 1 + static_cast<long long>(rng.next_below(100)), 500);
      r.segments.push_back({start, end, cls});
      labeled_frames += r.segments.back().length();
      cursor = end;
    }
    m.records.push_back(std::move(r));
  }
  const auto trimmed = trim_manifest(m);
  long long total = 0;
  for (const auto& r : trimmed.records) total += r.total_frames;
  CHECK(total == labeled_frames);
}

TEST_CASE("trim_manifest refuses records without segments") {
  const std::string text = header("untrimmed") + record_line("none", 10, "[]");
  CHECK_THROWS_AS(trim_manifest(parse_manifest(text)), DataError);
}
