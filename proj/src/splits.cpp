#include "vidcl/splits.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/rng.hpp"

namespace vidcl::data {

using nlohmann::json;

TaskSequence generate_task_sequence(const DatasetManifest& manifest, int num_tasks,
                                    std::uint64_t seed) {
  const int num_classes = manifest.num_classes();
  if (num_tasks < 2) throw ConfigError("num_tasks must be >= 2");
  if (num_classes < num_tasks)
    throw ConfigError("more tasks (" + std::to_string(num_tasks) + ") than classes (" +
                      std::to_string(num_classes) + ")");
  for (const auto& r : manifest.records)
    if (r.class_id == kUnassignedClass)
      throw DataError("record '" + r.video_id +
                      "' has no class label; assign labels before splitting");

  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  Rng class_rng(mix_seed(seed, "class-permutation"));
  class_rng.shuffle(classes);

  TaskSequence seq;
  seq.seed = seed;
  const int base = num_classes / num_tasks;
  const int extra = num_classes % num_tasks;  // earlier tasks get one more
  std::unordered_map<int, int> class_to_task;
  int cursor = 0;
  for (int t = 0; t < num_tasks; ++t) {
    Task task;
    task.task_index = t;
    const int count = base + (t < extra ? 1 : 0);
    for (int k = 0; k < count; ++k) {
      task.class_ids.push_back(classes[cursor]);
      class_to_task[classes[cursor]] = t;
      ++cursor;
    }
    std::sort(task.class_ids.begin(), task.class_ids.end());
    seq.tasks.push_back(std::move(task));
  }

  for (const auto& r : manifest.records) {
    Task& task = seq.tasks[class_to_task.at(r.class_id)];
    switch (r.partition) {
      case Partition::train: task.train_ids.push_back(r.video_id); break;
      case Partition::val: task.val_ids.push_back(r.video_id); break;
      case Partition::test: task.test_ids.push_back(r.video_id); break;
    }
  }
  for (auto& task : seq.tasks) {
    Rng rng(mix_seed(seed, "task-videos", static_cast<std::uint64_t>(task.task_index)));
    rng.shuffle(task.train_ids);
    rng.shuffle(task.val_ids);
    rng.shuffle(task.test_ids);
  }
  return seq;
}

std::string serialize_task_sequence(const TaskSequence& seq) {
  json out{{"seed", seq.seed}, {"tasks", json::array()}};
  for (const auto& t : seq.tasks) {
    out["tasks"].push_back({{"task_index", t.task_index},
                            {"class_ids", t.class_ids},
                            {"train_ids", t.train_ids},
                            {"val_ids", t.val_ids},
                            {"test_ids", t.test_ids}});
  }
  return out.dump(2) + "\n";
}

TaskSequence parse_task_sequence(const std::string& text) {
  TaskSequence seq;
  try {
    json j = json::parse(text);
    seq.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("tasks")) {
      Task task;
      task.task_index = t.at("task_index").get<int>();
      task.class_ids = t.at("class_ids").get<std::vector<int>>();
      task.train_ids = t.at("train_ids").get<std::vector<std::string>>();
      task.val_ids = t.at("val_ids").get<std::vector<std::string>>();
      task.test_ids = t.at("test_ids").get<std::vector<std::string>>();
      seq.tasks.push_back(std::move(task));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("task sequence parse error: ") + e.what());
  }
  return seq;
}

void save_task_sequence(const TaskSequence& seq, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write task sequence '" + path + "'");
  out << serialize_task_sequence(seq);
}

TaskSequence load_task_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open task sequence '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_task_sequence(buf.str());
}

void validate_task_sequence(const DatasetManifest& manifest, const TaskSequence& seq) {
  if (seq.tasks.empty()) throw DataError("task sequence has no tasks");

  std::unordered_map<std::string, const VideoRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.video_id] = &r;

  std::set<int> seen_classes;
  std::set<int> manifest_classes;
  for (const auto& r : manifest.records)
    if (r.class_id != kUnassignedClass) manifest_classes.insert(r.class_id);

  std::size_t min_count = manifest.class_names.size() + 1, max_count = 0;
  for (const auto& task : seq.tasks) {
    if (task.class_ids.empty())
      throw DataError("task " + std::to_string(task.task_index) + " has no classes");
    min_count = std::min(min_count, task.class_ids.size());
    max_count = std::max(max_count, task.class_ids.size());
    std::set<int> task_classes(task.class_ids.begin(), task.class_ids.end());
    for (int c : task_classes) {
      if (!seen_classes.insert(c).second)
        throw DataError("class " + std::to_string(c) + " appears in two tasks");
    }
    auto check_videos = [&](const std::vector<std::string>& ids) {
      for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
          throw DataError("task video '" + id + "' not in manifest");
        if (!task_classes.count(it->second->class_id))
          throw DataError("video '" + id + "' has class " +
                          std::to_string(it->second->class_id) +
                          " outside its task's class set");
      }
    };
    check_videos(task.train_ids);
    check_videos(task.val_ids);
    check_videos(task.test_ids);
  }
  if (max_count > min_count + 1)
    throw DataError("per-task class counts differ by more than 1");
  if (seen_classes != manifest_classes)
    throw DataError("task classes do not cover the manifest's classes exactly");
}

SplitStats split_stats(const DatasetManifest& manifest, const TaskSequence& seq) {
  SplitStats s;
  if (seq.tasks.empty()) return s;
  std::size_t min_c = manifest.class_names.size() + 1, max_c = 0;
  for (const auto& t : seq.tasks) {
    s.train_per_task += static_cast<double>(t.train_ids.size());
    s.val_per_task += static_cast<double>(t.val_ids.size());
    s.test_per_task += static_cast<double>(t.test_ids.size());
    min_c = std::min(min_c, t.class_ids.size());
    max_c = std::max(max_c, t.class_ids.size());
  }
  const double n = static_cast<double>(seq.tasks.size());
  s.train_per_task /= n;
  s.val_per_task /= n;
  s.test_per_task /= n;
  s.min_classes_per_task = static_cast<int>(min_c);
  s.max_classes_per_task = static_cast<int>(max_c);
  s.avg_frames_per_video = manifest.avg_frames_per_video();
  return s;
}

}  // namespace vidcl::data
