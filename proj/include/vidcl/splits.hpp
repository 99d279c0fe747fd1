#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidcl/manifest.hpp"

namespace vidcl::data {

struct Task {
  int task_index = 0;
  std::vector<int> class_ids;  // sorted ascending
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;

  bool operator==(const Task&) const = default;
};

// Class-incremental split: task class sets are disjoint, sizes differ by at
// most one (earlier tasks absorb the remainder).
struct TaskSequence {
  std::uint64_t seed = 0;
  std::vector<Task> tasks;

  bool operator==(const TaskSequence&) const = default;
};

// Shuffles class indices with a seeded permutation, partitions them into
// num_tasks contiguous groups, and assigns each labeled record to the task
// owning its class. Video order within each task partition is seed-shuffled.
// Deterministic for fixed (manifest, num_tasks, seed).
TaskSequence generate_task_sequence(const DatasetManifest& manifest, int num_tasks,
                                    std::uint64_t seed);

std::string serialize_task_sequence(const TaskSequence& seq);
TaskSequence parse_task_sequence(const std::string& text);
void save_task_sequence(const TaskSequence& seq, const std::string& path);
TaskSequence load_task_sequence(const std::string& path);

// Split statistics in the layout of the benchmark table: per-task video
// counts, classes per task, average frames per video.
struct SplitStats {
  double train_per_task = 0.0;
  double val_per_task = 0.0;
  double test_per_task = 0.0;
  int min_classes_per_task = 0;
  int max_classes_per_task = 0;
  double avg_frames_per_video = 0.0;
};

SplitStats split_stats(const DatasetManifest& manifest, const TaskSequence& seq);

// Throws DataError if the sequence violates the class-incremental
// invariants with respect to the manifest.
void validate_task_sequence(const DatasetManifest& manifest, const TaskSequence& seq);

}  // namespace vidcl::data
