#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidcl/harness.hpp"
#include "vidcl/manifest.hpp"
#include "vidcl/splits.hpp"
#include "vidcl/synthetic.hpp"

namespace vidcl::store {

// One experiment described by a single JSON config with sections
// {dataset, split, method, training, memory, tc}. Unknown keys are errors.
struct RunSpec {
  // dataset: exactly one of the two
  std::string manifest_path;
  std::optional<data::SyntheticConfig> synthetic;

  // split: a file, or generation parameters
  std::string split_file;
  int num_tasks = 0;
  std::uint64_t split_seed = 0;
  bool trim = false;  // trim an untrimmed manifest into per-segment records

  std::string method_name = "finetune";
  double lambda_reg = 3e5;

  int epochs_memory = 50;
  int epochs_reg = 20;
  double learning_rate = 1e-3;
  int segments = 8;
  int batch_size = 8;
  std::uint64_t seed = 0;

  // memory (memory methods only); frames_per_video 0 means ALL
  int max_video_instances = 0;
  int frames_per_video = 8;

  double lambda_tc = 0.5;

  bool operator==(const RunSpec&) const = default;
};

RunSpec parse_run_spec(const std::string& json_text);
std::string emit_run_spec(const RunSpec& spec);
RunSpec load_run_spec(const std::string& path);

// Materialized inputs of a run.
struct ResolvedRun {
  RunSpec spec;
  data::DatasetManifest manifest;
  data::TaskSequence tasks;
  harness::RunConfig config;
  std::string run_id;  // embeds method, dataset, tasks, frames/video, seed
};

// Loads or synthesizes the dataset (labeling/trimming untrimmed manifests),
// loads or generates the split, and derives the harness config.
ResolvedRun resolve_run(const RunSpec& spec);

// Store root: --store flag if given, else $VIDCL_STORE, else "runs".
std::string store_root(const std::string& flag_value);

struct RunArtifacts {
  std::string run_dir;
  std::string matrix_csv;
  std::string metrics_json;
  std::string run_manifest;
  std::string final_row;  // "method, frames_per_video, frame_capacity, Acc%, BWF%"
};

// Executes the run and persists config, split, accuracy matrix, metrics and
// checkpoints under <root>/<run_id>. Refuses an existing run dir without
// force.
RunArtifacts execute_run(const ResolvedRun& run, const std::string& root, bool force);

// Validation-only pass: the planned task schedule, one line per task.
std::vector<std::string> dry_run_plan(const ResolvedRun& run);

std::uint64_t file_digest(const std::string& path);

}  // namespace vidcl::store
