#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidcl/frames.hpp"
#include "vidcl/manifest.hpp"
#include "vidcl/memory.hpp"
#include "vidcl/methods.hpp"
#include "vidcl/metrics.hpp"
#include "vidcl/model.hpp"
#include "vidcl/splits.hpp"

namespace vidcl::harness {

enum class Method {
  finetune,  // no-memory sequential fine-tuning control
  ewc,
  mas,
  naive,
  icarl,
  bic,
  naive_tc,
  icarl_tc,
  bic_tc,
};

const char* to_string(Method m);
Method method_from_string(const std::string& s);

bool is_memory_method(Method m);
bool is_reg_method(Method m);
bool uses_tc(Method m);
bool uses_herding(Method m);      // iCaRL-style selection
bool uses_nearest_mean(Method m); // iCaRL-style inference
bool uses_bias_correction(Method m);

struct RunConfig {
  Method method = Method::finetune;
  int epochs_memory = 50;
  int epochs_reg = 20;
  double learning_rate = 1e-3;
  int segments = 8;  // frames sampled per clip
  double lambda_tc = 0.5;
  double lambda_reg = 3e5;
  int batch_size = 8;
  mem::MemoryBudget budget;  // memory methods only
  std::uint64_t seed = 0;
  model::ReferenceModel::Config model;

  int epochs_for_method() const {
    return is_memory_method(method) || method == Method::finetune ? epochs_memory
                                                                  : epochs_reg;
  }
  void validate() const;
};

struct ExperimentResult {
  metrics::AccuracyMatrix accuracy_matrix;
  metrics::PerClassReport per_class;        // after the final task
  std::vector<long long> memory_trace;      // stored frames after each task
  std::vector<int> memory_class_spread;     // max-min per-class entry count
  std::vector<double> wall_clock_seconds;   // per task
};

// TSN-style sampling: the video is divided into `n` equal segments; train
// mode draws one uniform index per segment, eval mode takes each segment's
// center (the uniform_subsample formula). Indices repeat when
// total_frames < n.
std::vector<long long> segment_sample(long long total_frames, int n, bool train_mode,
                                      std::uint64_t seed);

// Accuracy of `model` on the given videos: nearest-mean-of-exemplars for
// iCaRL-style methods, argmax over (bias-corrected, for BiC) logits
// otherwise. Predictions are appended to `predictions` when non-null.
double evaluate_task(const model::Model& model, const mem::EpisodicMemory* memory,
                     Method method, const std::vector<std::string>& video_ids,
                     const data::DatasetManifest& manifest,
                     const data::FrameProvider& provider, int segments,
                     const methods::BiasCorrectionLayer* bias_layer = nullptr,
                     std::vector<std::pair<int, int>>* predictions = nullptr);

// Sequential class-incremental training over the task sequence. Fully
// deterministic for a fixed config. When checkpoint_dir is set, per-task
// model/memory/importance checkpoints are written there.
ExperimentResult run_sequence(const RunConfig& config,
                              const data::DatasetManifest& manifest,
                              const data::TaskSequence& tasks,
                              const std::string& checkpoint_dir = {});

}  // namespace vidcl::harness
