#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vidcl/frames.hpp"

namespace vidcl::mem {

// Replay budget denominated in stored frames, not video instances.
struct MemoryBudget {
  static constexpr int kAllFrames = 0;  // frames_per_video sentinel

  int max_video_instances = 0;
  int frames_per_video = 8;        // kAllFrames keeps full videos
  long long frame_capacity = 0;

  bool stores_all_frames() const { return frames_per_video == kAllFrames; }
  bool operator==(const MemoryBudget&) const = default;
};

// Down-sampled rows: instances x frames_per_video, exact. ALL rows:
// round(instances x average full-video length).
long long frame_capacity(int max_video_instances, int frames_per_video,
                         double avg_frames_full = 0.0);

MemoryBudget make_budget(int max_video_instances, int frames_per_video,
                         double avg_frames_full = 0.0);

// Centers of k equal temporal bins: floor((i + 0.5) * total / k). Indices
// are non-decreasing and repeat when total_frames < k.
std::vector<long long> uniform_subsample(long long total_frames, int k);

struct MemoryEntry {
  std::string video_id;
  int class_id = 0;
  std::vector<long long> frame_indices;  // source indices of stored frames
  data::FrameStack stored_frames;
  int selection_rank = 0;  // 0 = most representative

  bool operator==(const MemoryEntry&) const = default;
};

struct ExemplarPick {
  std::string video_id;
  int class_id = 0;
  int selection_rank = 0;
};

// Seeded uniform pick without replacement, per class; classes with fewer
// candidates than the quota keep everything. Rank = draw order.
std::vector<ExemplarPick> select_exemplars_random(
    const std::vector<std::pair<std::string, int>>& candidates, int per_class_quota,
    std::uint64_t seed);

// Greedy herding: each step picks the candidate whose inclusion brings the
// running mean of chosen features closest (Euclidean) to the mean of all
// candidate features. Ties break toward the lowest index. Returns indices
// in pick order.
std::vector<int> select_exemplars_herding(
    const std::vector<std::vector<double>>& feature_vectors, int per_class_quota);

class EpisodicMemory {
 public:
  EpisodicMemory() = default;
  explicit EpisodicMemory(MemoryBudget budget) : budget_(budget) {}

  const MemoryBudget& budget() const { return budget_; }
  int classes_seen() const { return classes_seen_; }

  // Throws DataError if the frame budget would be exceeded.
  void insert(MemoryEntry entry);

  // Shrinks every class to quota = floor(instances / classes_seen_after),
  // keeping the lowest selection ranks. Idempotent at a fixed class count.
  void rebalance(int classes_seen_after_task);

  long long total_stored_frames() const;
  std::map<int, int> per_class_counts() const;
  bool empty() const;
  // All entries in deterministic order (class ascending, rank ascending).
  std::vector<const MemoryEntry*> all_entries() const;
  const std::map<int, std::vector<MemoryEntry>>& entries_by_class() const {
    return entries_;
  }

  bool operator==(const EpisodicMemory&) const = default;

 private:
  MemoryBudget budget_;
  std::map<int, std::vector<MemoryEntry>> entries_;
  int classes_seen_ = 0;
};

// One seeded shuffled epoch over the memory. Empty memory yields no batches.
std::vector<std::vector<const MemoryEntry*>> replay_batches(const EpisodicMemory& memory,
                                                            int batch_size,
                                                            std::uint64_t seed);

// Snapshot directory: index.json plus frames.bin holding the entry count
// followed by each entry's k x h x w 8-bit frame stack. Round-trips
// bit-exactly.
void save_memory_snapshot(const EpisodicMemory& memory, const std::string& dir);
EpisodicMemory load_memory_snapshot(const std::string& dir);

}  // namespace vidcl::mem
