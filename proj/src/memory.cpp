#include "vidcl/memory.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/rng.hpp"

namespace vidcl::mem {

using nlohmann::json;

long long frame_capacity(int max_video_instances, int frames_per_video,
                         double avg_frames_full) {
  if (max_video_instances <= 0)
    throw ConfigError("max_video_instances must be positive");
  if (frames_per_video == MemoryBudget::kAllFrames) {
    if (avg_frames_full <= 0.0)
      throw ConfigError("full-video budgets need the average video length");
    return std::llround(static_cast<double>(max_video_instances) * avg_frames_full);
  }
  if (frames_per_video < 1) throw ConfigError("frames_per_video must be >= 1 or ALL");
  return static_cast<long long>(max_video_instances) * frames_per_video;
}

MemoryBudget make_budget(int max_video_instances, int frames_per_video,
                         double avg_frames_full) {
  MemoryBudget b;
  b.max_video_instances = max_video_instances;
  b.frames_per_video = frames_per_video;
  b.frame_capacity = frame_capacity(max_video_instances, frames_per_video, avg_frames_full);
  return b;
}

std::vector<long long> uniform_subsample(long long total_frames, int k) {
  if (total_frames < 1) throw ConfigError("total_frames must be >= 1");
  if (k < 1) throw ConfigError("subsample count must be >= 1");
  std::vector<long long> indices(k);
  for (int i = 0; i < k; ++i) {
    // floor((i + 0.5) * total / k) in exact integer arithmetic
    indices[i] = std::min(total_frames - 1,
                          (2LL * i + 1) * total_frames / (2LL * k));
  }
  return indices;
}

std::vector<ExemplarPick> select_exemplars_random(
    const std::vector<std::pair<std::string, int>>& candidates, int per_class_quota,
    std::uint64_t seed) {
  if (per_class_quota < 0) throw ConfigError("per_class_quota must be >= 0");
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [id, cls] : candidates) by_class[cls].push_back(id);

  std::vector<ExemplarPick> picks;
  for (auto& [cls, ids] : by_class) {
    Rng rng(mix_seed(seed, "select-random", static_cast<std::uint64_t>(cls)));
    rng.shuffle(ids);
    const int take = std::min<int>(per_class_quota, static_cast<int>(ids.size()));
    for (int i = 0; i < take; ++i) picks.push_back({ids[i], cls, i});
  }
  return picks;
}

std::vector<int> select_exemplars_herding(
    const std::vector<std::vector<double>>& feature_vectors, int per_class_quota) {
  if (feature_vectors.empty()) throw DataError("herding needs at least one candidate");
  if (per_class_quota < 1) throw ConfigError("per_class_quota must be >= 1");
  const std::size_t dim = feature_vectors.front().size();
  for (const auto& f : feature_vectors)
    if (f.size() != dim) throw DataError("herding feature dimensions differ");

  const int n = static_cast<int>(feature_vectors.size());
  const int quota = std::min(per_class_quota, n);

  std::vector<double> class_mean(dim, 0.0);
  for (const auto& f : feature_vectors)
    for (std::size_t d = 0; d < dim; ++d) class_mean[d] += f[d];
  for (auto& v : class_mean) v /= n;

  std::vector<int> picked;
  std::vector<bool> used(n, false);
  std::vector<double> chosen_sum(dim, 0.0);
  for (int step = 0; step < quota; ++step) {
    int best = -1;
    double best_dist = 0.0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      double dist = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double mean_d = (chosen_sum[d] + feature_vectors[i][d]) / (step + 1);
        const double delta = class_mean[d] - mean_d;
        dist += delta * delta;
      }
      if (best < 0 || dist < best_dist) {
        best = i;
        best_dist = dist;
      }
    }
    used[best] = true;
    picked.push_back(best);
    for (std::size_t d = 0; d < dim; ++d) chosen_sum[d] += feature_vectors[best][d];
  }
  return picked;
}

void EpisodicMemory::insert(MemoryEntry entry) {
  if (!budget_.stores_all_frames() &&
      static_cast<int>(entry.frame_indices.size()) != budget_.frames_per_video)
    throw DataError("entry '" + entry.video_id + "' stores " +
                    std::to_string(entry.frame_indices.size()) +
                    " frames, budget expects " +
                    std::to_string(budget_.frames_per_video));
  const long long after = total_stored_frames() + entry.stored_frames.frames;
  if (after > budget_.frame_capacity)
    throw DataError("memory frame budget exceeded: " + std::to_string(after) + " > " +
                    std::to_string(budget_.frame_capacity));
  entries_[entry.class_id].push_back(std::move(entry));
}

void EpisodicMemory::rebalance(int classes_seen_after_task) {
  if (classes_seen_after_task < classes_seen_)
    throw ConfigError("classes_seen cannot decrease across tasks");
  classes_seen_ = classes_seen_after_task;
  if (classes_seen_ == 0) return;
  const int quota = budget_.max_video_instances / classes_seen_;
  for (auto& [cls, entries] : entries_) {
    if (static_cast<int>(entries.size()) <= quota) continue;
    std::sort(entries.begin(), entries.end(),
              [](const MemoryEntry& a, const MemoryEntry& b) {
                return a.selection_rank < b.selection_rank;
              });
    entries.resize(quota);
  }
}

long long EpisodicMemory::total_stored_frames() const {
  long long total = 0;
  for (const auto& [cls, entries] : entries_)
    for (const auto& e : entries) total += e.stored_frames.frames;
  return total;
}

std::map<int, int> EpisodicMemory::per_class_counts() const {
  std::map<int, int> counts;
  for (const auto& [cls, entries] : entries_)
    counts[cls] = static_cast<int>(entries.size());
  return counts;
}

bool EpisodicMemory::empty() const {
  for (const auto& [cls, entries] : entries_)
    if (!entries.empty()) return false;
  return true;
}

std::vector<const MemoryEntry*> EpisodicMemory::all_entries() const {
  std::vector<const MemoryEntry*> out;
  for (const auto& [cls, entries] : entries_) {
    std::vector<const MemoryEntry*> per_class;
    per_class.reserve(entries.size());
    for (const auto& e : entries) per_class.push_back(&e);
    std::sort(per_class.begin(), per_class.end(),
              [](const MemoryEntry* a, const MemoryEntry* b) {
                return a->selection_rank < b->selection_rank;
              });
    out.insert(out.end(), per_class.begin(), per_class.end());
  }
  return out;
}

std::vector<std::vector<const MemoryEntry*>> replay_batches(const EpisodicMemory& memory,
                                                            int batch_size,
                                                            std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  auto entries = memory.all_entries();
  Rng rng(mix_seed(seed, "replay-epoch"));
  rng.shuffle(entries);
  std::vector<std::vector<const MemoryEntry*>> batches;
  for (std::size_t i = 0; i < entries.size(); i += batch_size) {
    const std::size_t end = std::min(entries.size(), i + batch_size);
    batches.emplace_back(entries.begin() + i, entries.begin() + end);
  }
  return batches;
}

void save_memory_snapshot(const EpisodicMemory& memory, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto entries = memory.all_entries();

  json index{{"budget",
              {{"max_video_instances", memory.budget().max_video_instances},
               {"frames_per_video", memory.budget().frames_per_video},
               {"frame_capacity", memory.budget().frame_capacity}}},
             {"classes_seen", memory.classes_seen()},
             {"entries", json::array()}};
  for (const auto* e : entries) {
    index["entries"].push_back({{"video_id", e->video_id},
                                {"class_id", e->class_id},
                                {"selection_rank", e->selection_rank},
                                {"frame_indices", e->frame_indices},
                                {"frames", e->stored_frames.frames},
                                {"height", e->stored_frames.height},
                                {"width", e->stored_frames.width}});
  }
  std::ofstream idx(dir + "/index.json", std::ios::binary);
  if (!idx) throw DataError("cannot write memory index in '" + dir + "'");
  idx << index.dump(2) << "\n";

  std::ofstream bin(dir + "/frames.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write memory frames in '" + dir + "'");
  const std::uint64_t count = entries.size();
  bin.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto* e : entries) {
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(e->stored_frames.frames),
                                   static_cast<std::uint32_t>(e->stored_frames.height),
                                   static_cast<std::uint32_t>(e->stored_frames.width)};
    bin.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    bin.write(reinterpret_cast<const char*>(e->stored_frames.data.data()),
              static_cast<std::streamsize>(e->stored_frames.data.size()));
  }
}

EpisodicMemory load_memory_snapshot(const std::string& dir) {
  std::ifstream idx(dir + "/index.json", std::ios::binary);
  if (!idx) throw DataError("cannot open memory index in '" + dir + "'");
  json index;
  try {
    idx >> index;
  } catch (const json::exception& e) {
    throw DataError(std::string("memory index parse error: ") + e.what());
  }

  MemoryBudget budget;
  budget.max_video_instances = index.at("budget").at("max_video_instances").get<int>();
  budget.frames_per_video = index.at("budget").at("frames_per_video").get<int>();
  budget.frame_capacity = index.at("budget").at("frame_capacity").get<long long>();
  EpisodicMemory memory(budget);

  std::ifstream bin(dir + "/frames.bin", std::ios::binary);
  if (!bin) throw DataError("cannot open memory frames in '" + dir + "'");
  std::uint64_t count = 0;
  bin.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (count != index.at("entries").size())
    throw DataError("memory snapshot entry counts disagree");

  for (const auto& je : index.at("entries")) {
    MemoryEntry e;
    e.video_id = je.at("video_id").get<std::string>();
    e.class_id = je.at("class_id").get<int>();
    e.selection_rank = je.at("selection_rank").get<int>();
    e.frame_indices = je.at("frame_indices").get<std::vector<long long>>();
    std::uint32_t dims[3];
    bin.read(reinterpret_cast<char*>(dims), sizeof(dims));
    e.stored_frames.frames = static_cast<int>(dims[0]);
    e.stored_frames.height = static_cast<int>(dims[1]);
    e.stored_frames.width = static_cast<int>(dims[2]);
    if (static_cast<int>(je.at("frames").get<int>()) != e.stored_frames.frames)
      throw DataError("memory snapshot frame counts disagree for '" + e.video_id + "'");
    e.stored_frames.data.resize(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    bin.read(reinterpret_cast<char*>(e.stored_frames.data.data()),
             static_cast<std::streamsize>(e.stored_frames.data.size()));
    if (!bin) throw DataError("memory frames.bin is truncated");
    memory.insert(std::move(e));
  }
  memory.rebalance(index.at("classes_seen").get<int>());
  return memory;
}

}  // namespace vidcl::mem
