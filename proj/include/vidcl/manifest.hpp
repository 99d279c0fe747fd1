#pragma once

#include <optional>
#include <string>
#include <vector>

namespace vidcl::data {

inline constexpr int kUnassignedClass = -1;

enum class Partition { train, val, test };

enum class TrimMode { trimmed, untrimmed };

const char* to_string(Partition p);
const char* to_string(TrimMode m);
Partition partition_from_string(const std::string& s);
TrimMode trim_mode_from_string(const std::string& s);

// A labeled temporal extent inside a video. Frame indices are
// [start_frame, end_frame) relative to the parent video.
struct SegmentAnnotation {
  long long start_frame = 0;
  long long end_frame = 0;
  int class_id = 0;

  long long length() const { return end_frame - start_frame; }
  bool operator==(const SegmentAnnotation&) const = default;
};

struct VideoRecord {
  std::string video_id;
  long long total_frames = 0;
  std::vector<SegmentAnnotation> segments;
  int class_id = kUnassignedClass;  // kUnassignedClass until labeled
  Partition partition = Partition::train;
  std::string frame_source;  // locator, see frames.hpp

  bool operator==(const VideoRecord&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> class_names;  // indexed by class_id
  std::vector<VideoRecord> records;
  TrimMode trim_mode = TrimMode::trimmed;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  double avg_frames_per_video() const;
  // Throws DataError on the first violated invariant, naming the record.
  void validate() const;
};

// JSON Lines: header line {name, class_names, trim_mode}, then one record
// per line. Parse errors report the 1-based line number.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

DatasetManifest parse_manifest(const std::string& text);
std::string serialize_manifest(const DatasetManifest& m);

struct UntrimmedLabelResult {
  DatasetManifest manifest;
  int discarded_count = 0;
  double discarded_fraction = 0.0;
};

// Whole-video labeling for untrimmed data: drops every record whose
// segments carry two or more distinct classes, then labels each survivor
// with the class of longest total segment support (lowest class id on
// ties). Idempotent.
UntrimmedLabelResult assign_untrimmed_labels(const DatasetManifest& m);

// Turns each labeled segment into an independent trimmed record with id
// "<parent_id>#<segment_ordinal>". Labeled frame totals are conserved.
DatasetManifest trim_manifest(const DatasetManifest& m);

}  // namespace vidcl::data
