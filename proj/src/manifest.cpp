#include "vidcl/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "vidcl/errors.hpp"

namespace vidcl::data {

using nlohmann::json;

const char* to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

const char* to_string(TrimMode m) {
  return m == TrimMode::trimmed ? "trimmed" : "untrimmed";
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::train;
  if (s == "val") return Partition::val;
  if (s == "test") return Partition::test;
  throw DataError("unknown partition '" + s + "'");
}

TrimMode trim_mode_from_string(const std::string& s) {
  if (s == "trimmed") return TrimMode::trimmed;
  if (s == "untrimmed") return TrimMode::untrimmed;
  throw DataError("unknown trim_mode '" + s + "'");
}

double DatasetManifest::avg_frames_per_video() const {
  if (records.empty()) return 0.0;
  long long total = 0;
  for (const auto& r : records) total += r.total_frames;
  return static_cast<double>(total) / static_cast<double>(records.size());
}

namespace {

// Primary label of a record: class with the longest total segment support,
// lowest class id on ties. Requires at least one segment.
int primary_label(const VideoRecord& r) {
  std::map<int, long long> support;
  for (const auto& s : r.segments) support[s.class_id] += s.length();
  int best = kUnassignedClass;
  long long best_len = -1;
  for (const auto& [cls, len] : support) {
    if (len > best_len) {
      best = cls;
      best_len = len;
    }
  }
  return best;
}

int distinct_segment_classes(const VideoRecord& r) {
  std::set<int> classes;
  for (const auto& s : r.segments) classes.insert(s.class_id);
  return static_cast<int>(classes.size());
}

}  // namespace

void DatasetManifest::validate() const {
  if (class_names.empty()) throw DataError("manifest '" + name + "' has no classes");
  std::unordered_set<std::string> seen_ids;
  for (const auto& r : records) {
    if (r.video_id.empty()) throw DataError("record with empty video_id");
    if (!seen_ids.insert(r.video_id).second)
      throw DataError("duplicate video_id '" + r.video_id + "'");
    if (r.total_frames < 1)
      throw DataError("record '" + r.video_id + "': total_frames must be >= 1");
    for (const auto& s : r.segments) {
      if (s.start_frame < 0 || s.start_frame >= s.end_frame)
        throw DataError("record '" + r.video_id + "': segment must satisfy start < end");
      if (s.end_frame > r.total_frames)
        throw DataError("record '" + r.video_id + "': segment end " +
                        std::to_string(s.end_frame) + " exceeds total_frames " +
                        std::to_string(r.total_frames));
      if (s.class_id < 0 || s.class_id >= num_classes())
        throw DataError("record '" + r.video_id + "': segment class " +
                        std::to_string(s.class_id) + " out of range");
    }
    if (r.class_id != kUnassignedClass) {
      if (r.class_id < 0 || r.class_id >= num_classes())
        throw DataError("record '" + r.video_id + "': class " +
                        std::to_string(r.class_id) + " out of range");
      if (!r.segments.empty() && r.class_id != primary_label(r))
        throw DataError("record '" + r.video_id +
                        "': class_id disagrees with its primary segment label");
    }
    if (trim_mode == TrimMode::trimmed) {
      if (r.segments.empty()) {
        if (r.class_id == kUnassignedClass)
          throw DataError("record '" + r.video_id +
                          "': trimmed record without segments must carry a class");
      } else {
        const bool whole = r.segments.size() == 1 &&
                           r.segments[0].start_frame == 0 &&
                           r.segments[0].end_frame == r.total_frames;
        if (!whole)
          throw DataError("record '" + r.video_id +
                          "': trimmed record must be one whole-video extent");
      }
    }
  }
}

namespace {

json record_to_json(const VideoRecord& r) {
  json segs = json::array();
  for (const auto& s : r.segments)
    segs.push_back({{"start", s.start_frame}, {"end", s.end_frame}, {"class", s.class_id}});
  json j{{"video_id", r.video_id},
         {"total_frames", r.total_frames},
         {"partition", to_string(r.partition)},
         {"segments", std::move(segs)},
         {"frame_source", r.frame_source}};
  if (r.class_id != kUnassignedClass) j["class"] = r.class_id;
  return j;
}

VideoRecord record_from_json(const json& j) {
  VideoRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.total_frames = j.at("total_frames").get<long long>();
  r.partition = partition_from_string(j.at("partition").get<std::string>());
  for (const auto& s : j.at("segments")) {
    r.segments.push_back({s.at("start").get<long long>(), s.at("end").get<long long>(),
                          s.at("class").get<int>()});
  }
  r.frame_source = j.value("frame_source", std::string{});
  r.class_id = j.value("class", kUnassignedClass);
  return r;
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  json header{{"name", m.name},
              {"class_names", m.class_names},
              {"trim_mode", to_string(m.trim_mode)}};
  out << header.dump() << '\n';
  for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
  return out.str();
}

DatasetManifest parse_manifest(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest parse error at line " + std::to_string(line_no) +
                      ": " + e.what());
    }
    try {
      if (!have_header) {
        m.name = j.at("name").get<std::string>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.trim_mode = trim_mode_from_string(j.at("trim_mode").get<std::string>());
        have_header = true;
      } else {
        m.records.push_back(record_from_json(j));
      }
    } catch (const json::exception& e) {
      throw DataError("manifest schema error at line " + std::to_string(line_no) +
                      ": " + e.what());
    }
  }
  if (!have_header) throw DataError("manifest is empty (missing header line)");
  // Trimmed records given as a single whole-video extent get their class
  // from that extent.
  for (auto& r : m.records) {
    if (r.class_id == kUnassignedClass && m.trim_mode == TrimMode::trimmed &&
        r.segments.size() == 1) {
      r.class_id = r.segments[0].class_id;
    }
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << serialize_manifest(m);
}

UntrimmedLabelResult assign_untrimmed_labels(const DatasetManifest& m) {
  if (m.trim_mode != TrimMode::untrimmed)
    throw DataError("assign_untrimmed_labels requires an untrimmed manifest");
  UntrimmedLabelResult result;
  result.manifest.name = m.name;
  result.manifest.class_names = m.class_names;
  result.manifest.trim_mode = TrimMode::untrimmed;
  for (const auto& r : m.records) {
    if (r.segments.empty())
      throw DataError("record '" + r.video_id +
                      "' has no segments; cannot assign a primary label");
    if (distinct_segment_classes(r) >= 2) {
      ++result.discarded_count;
      continue;
    }
    VideoRecord labeled = r;
    labeled.class_id = primary_label(r);
    result.manifest.records.push_back(std::move(labeled));
  }
  result.discarded_fraction =
      m.records.empty() ? 0.0
                        : static_cast<double>(result.discarded_count) /
                              static_cast<double>(m.records.size());
  result.manifest.validate();
  return result;
}

// '#<digits>' suffix composes an extra frame offset onto a locator.
static std::string offset_frame_source(const std::string& src, long long extra) {
  if (extra == 0) return src;
  auto pos = src.rfind('#');
  if (pos != std::string::npos && pos + 1 < src.size()) {
    const std::string tail = src.substr(pos + 1);
    if (std::all_of(tail.begin(), tail.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      long long base = std::stoll(tail);
      return src.substr(0, pos + 1) + std::to_string(base + extra);
    }
  }
  return src + "#" + std::to_string(extra);
}

DatasetManifest trim_manifest(const DatasetManifest& m) {
  if (m.trim_mode != TrimMode::untrimmed)
    throw DataError("trim_manifest requires an untrimmed manifest");
  DatasetManifest out;
  out.name = m.name + "-trim";
  out.class_names = m.class_names;
  out.trim_mode = TrimMode::trimmed;
  for (const auto& r : m.records) {
    if (r.segments.empty())
      throw DataError("record '" + r.video_id + "' has no segments to trim");
    int ordinal = 0;
    for (const auto& s : r.segments) {
      VideoRecord child;
      child.video_id = r.video_id + "#" + std::to_string(ordinal++);
      child.total_frames = s.length();
      child.segments = {{0, s.length(), s.class_id}};
      child.class_id = s.class_id;
      child.partition = r.partition;
      child.frame_source = offset_frame_source(r.frame_source, s.start_frame);
      out.records.push_back(std::move(child));
    }
  }
  out.validate();
  return out;
}

}  // namespace vidcl::data
