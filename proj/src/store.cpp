#include "vidcl/store.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/memory.hpp"
#include "vidcl/metrics.hpp"
#include "vidcl/rng.hpp"

namespace vidcl::store {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown_keys(const json& obj, const std::string& section,
                         const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
}

}  // namespace

RunSpec parse_run_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  reject_unknown_keys(j, "", {"dataset", "split", "method", "training", "memory", "tc"});

  RunSpec spec;
  try {
    const json dataset = j.at("dataset");
    reject_unknown_keys(dataset, "dataset", {"manifest", "synthetic"});
    if (dataset.contains("manifest") == dataset.contains("synthetic"))
      throw ConfigError("dataset needs exactly one of 'manifest' or 'synthetic'");
    if (dataset.contains("manifest"))
      spec.manifest_path = dataset.at("manifest").get<std::string>();
    if (dataset.contains("synthetic")) {
      const json s = dataset.at("synthetic");
      reject_unknown_keys(s, "dataset.synthetic",
                          {"num_classes", "videos_per_class", "frames_per_video",
                           "height", "width", "seed", "temporal_strength"});
      data::SyntheticConfig cfg;
      cfg.num_classes = s.at("num_classes").get<int>();
      cfg.videos_per_class = s.at("videos_per_class").get<int>();
      cfg.frames_per_video = s.at("frames_per_video").get<int>();
      cfg.height = s.value("height", 16);
      cfg.width = s.value("width", 16);
      cfg.seed = s.value("seed", 0ULL);
      cfg.temporal_strength = s.value("temporal_strength", 1.0);
      spec.synthetic = cfg;
    }

    const json split = j.at("split");
    reject_unknown_keys(split, "split", {"file", "num_tasks", "seed", "trim"});
    if (split.contains("file") == split.contains("num_tasks"))
      throw ConfigError("split needs exactly one of 'file' or 'num_tasks'");
    if (split.contains("file")) spec.split_file = split.at("file").get<std::string>();
    spec.num_tasks = split.value("num_tasks", 0);
    spec.split_seed = split.value("seed", 0ULL);
    spec.trim = split.value("trim", false);

    const json method = j.at("method");
    reject_unknown_keys(method, "method", {"name", "lambda_reg"});
    spec.method_name = method.at("name").get<std::string>();
    spec.lambda_reg = method.value("lambda_reg", 3e5);

    if (j.contains("training")) {
      const json tr = j.at("training");
      reject_unknown_keys(tr, "training",
                          {"epochs_memory", "epochs_reg", "learning_rate", "segments",
                           "batch_size", "seed"});
      spec.epochs_memory = tr.value("epochs_memory", 50);
      spec.epochs_reg = tr.value("epochs_reg", 20);
      spec.learning_rate = tr.value("learning_rate", 1e-3);
      spec.segments = tr.value("segments", 8);
      spec.batch_size = tr.value("batch_size", 8);
      spec.seed = tr.value("seed", 0ULL);
    }

    if (j.contains("memory")) {
      const json mem = j.at("memory");
      reject_unknown_keys(mem, "memory", {"max_video_instances", "frames_per_video"});
      spec.max_video_instances = mem.value("max_video_instances", 0);
      if (mem.contains("frames_per_video")) {
        const auto& fpv = mem.at("frames_per_video");
        if (fpv.is_string()) {
          if (fpv.get<std::string>() != "ALL")
            throw ConfigError("memory.frames_per_video must be a count or \"ALL\"");
          spec.frames_per_video = mem::MemoryBudget::kAllFrames;
        } else {
          spec.frames_per_video = fpv.get<int>();
        }
      }
    }

    if (j.contains("tc")) {
      const json tc = j.at("tc");
      reject_unknown_keys(tc, "tc", {"lambda"});
      spec.lambda_tc = tc.value("lambda", 0.5);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config schema error: ") + e.what());
  }
  return spec;
}

std::string emit_run_spec(const RunSpec& spec) {
  json j;
  if (spec.synthetic) {
    const auto& s = *spec.synthetic;
    j["dataset"]["synthetic"] = {{"num_classes", s.num_classes},
                                 {"videos_per_class", s.videos_per_class},
                                 {"frames_per_video", s.frames_per_video},
                                 {"height", s.height},
                                 {"width", s.width},
                                 {"seed", s.seed},
                                 {"temporal_strength", s.temporal_strength}};
  } else {
    j["dataset"]["manifest"] = spec.manifest_path;
  }
  if (!spec.split_file.empty()) {
    j["split"]["file"] = spec.split_file;
  } else {
    j["split"]["num_tasks"] = spec.num_tasks;
    j["split"]["seed"] = spec.split_seed;
  }
  j["split"]["trim"] = spec.trim;
  j["method"] = {{"name", spec.method_name}, {"lambda_reg", spec.lambda_reg}};
  j["training"] = {{"epochs_memory", spec.epochs_memory},
                   {"epochs_reg", spec.epochs_reg},
                   {"learning_rate", spec.learning_rate},
                   {"segments", spec.segments},
                   {"batch_size", spec.batch_size},
                   {"seed", spec.seed}};
  if (spec.max_video_instances > 0) {
    j["memory"]["max_video_instances"] = spec.max_video_instances;
    if (spec.frames_per_video == mem::MemoryBudget::kAllFrames)
      j["memory"]["frames_per_video"] = "ALL";
    else
      j["memory"]["frames_per_video"] = spec.frames_per_video;
  }
  j["tc"] = {{"lambda", spec.lambda_tc}};
  return j.dump(2) + "\n";
}

RunSpec load_run_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_spec(buf.str());
}

ResolvedRun resolve_run(const RunSpec& spec) {
  ResolvedRun run;
  run.spec = spec;

  if (spec.synthetic) {
    run.manifest = data::generate_synthetic_dataset(*spec.synthetic);
  } else {
    run.manifest = data::load_manifest(spec.manifest_path);
  }
  if (run.manifest.trim_mode == data::TrimMode::untrimmed) {
    auto labeled = data::assign_untrimmed_labels(run.manifest);
    run.manifest = spec.trim ? data::trim_manifest(labeled.manifest)
                             : std::move(labeled.manifest);
  } else if (spec.trim) {
    throw ConfigError("split.trim applies to untrimmed manifests only");
  }

  if (!spec.split_file.empty()) {
    run.tasks = data::load_task_sequence(spec.split_file);
  } else {
    run.tasks = data::generate_task_sequence(run.manifest, spec.num_tasks,
                                             spec.split_seed);
  }
  data::validate_task_sequence(run.manifest, run.tasks);

  harness::RunConfig cfg;
  cfg.method = harness::method_from_string(spec.method_name);
  cfg.epochs_memory = spec.epochs_memory;
  cfg.epochs_reg = spec.epochs_reg;
  cfg.learning_rate = spec.learning_rate;
  cfg.segments = spec.segments;
  cfg.batch_size = spec.batch_size;
  cfg.lambda_tc = spec.lambda_tc;
  cfg.lambda_reg = spec.lambda_reg;
  cfg.seed = spec.seed;
  if (harness::is_memory_method(cfg.method)) {
    if (spec.max_video_instances < 1)
      throw ConfigError("method '" + spec.method_name + "' needs a memory section");
    cfg.budget = mem::make_budget(spec.max_video_instances, spec.frames_per_video,
                                  run.manifest.avg_frames_per_video());
  }
  // model input size follows the data
  if (run.manifest.records.empty()) throw DataError("manifest has no records");
  data::FrameProvider probe;
  const auto first = probe.load(run.manifest.records.front());
  cfg.model.height = first.height;
  cfg.model.width = first.width;
  cfg.validate();
  run.config = cfg;

  std::string method_tag = spec.method_name;
  std::replace(method_tag.begin(), method_tag.end(), '+', '-');
  const std::string fpv_tag =
      !harness::is_memory_method(cfg.method)     ? "none"
      : cfg.budget.stores_all_frames()           ? "all"
      : std::to_string(cfg.budget.frames_per_video);
  run.run_id = method_tag + "_" + run.manifest.name + "_t" +
               std::to_string(run.tasks.tasks.size()) + "_f" + fpv_tag + "_s" +
               std::to_string(spec.seed);
  return run;
}

std::string store_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("VIDCL_STORE"); env != nullptr && *env != '\0')
    return env;
  return "runs";
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for digest");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    if (!in) break;
  }
  return h;
}

std::vector<std::string> dry_run_plan(const ResolvedRun& run) {
  std::vector<std::string> plan;
  plan.push_back("run " + run.run_id + ": method=" + run.spec.method_name +
                 " epochs=" + std::to_string(run.config.epochs_for_method()) +
                 " lr=" + std::to_string(run.config.learning_rate));
  for (const auto& task : run.tasks.tasks) {
    std::ostringstream line;
    line << "task " << task.task_index << ": classes={";
    for (std::size_t i = 0; i < task.class_ids.size(); ++i)
      line << (i ? "," : "") << task.class_ids[i];
    line << "} train=" << task.train_ids.size() << " val=" << task.val_ids.size()
         << " test=" << task.test_ids.size();
    plan.push_back(line.str());
  }
  return plan;
}

RunArtifacts execute_run(const ResolvedRun& run, const std::string& root, bool force) {
  RunArtifacts art;
  art.run_dir = root + "/" + run.run_id;
  if (fs::exists(art.run_dir)) {
    if (!force)
      throw ConfigError("run '" + run.run_id + "' already exists; pass --force to redo");
    fs::remove_all(art.run_dir);
  }
  fs::create_directories(art.run_dir);

  {
    std::ofstream cfg(art.run_dir + "/config.json", std::ios::binary);
    cfg << emit_run_spec(run.spec);
  }
  data::save_task_sequence(run.tasks, art.run_dir + "/split.json");

  const auto result = harness::run_sequence(run.config, run.manifest, run.tasks,
                                            art.run_dir + "/checkpoints");

  art.matrix_csv = art.run_dir + "/matrix.csv";
  metrics::save_accuracy_matrix(result.accuracy_matrix, art.matrix_csv);
  art.metrics_json = art.run_dir + "/metrics.json";
  {
    std::ofstream out(art.metrics_json, std::ios::binary);
    out << metrics::metrics_report_json(result.accuracy_matrix, result.per_class);
  }

  const double acc = metrics::final_average_accuracy(result.accuracy_matrix);
  const double bwf = metrics::backward_forgetting(result.accuracy_matrix);
  char row[160];
  const std::string fpv =
      !harness::is_memory_method(run.config.method)   ? "-"
      : run.config.budget.stores_all_frames()         ? "ALL"
      : std::to_string(run.config.budget.frames_per_video);
  const std::string cap = harness::is_memory_method(run.config.method)
                              ? std::to_string(run.config.budget.frame_capacity)
                              : "-";
  std::snprintf(row, sizeof(row), "%s, %s, %s, %.2f%%, %.2f%%",
                run.spec.method_name.c_str(), fpv.c_str(), cap.c_str(), 100.0 * acc,
                100.0 * bwf);
  art.final_row = row;

  json manifest_json{
      {"run_id", run.run_id},
      {"method", run.spec.method_name},
      {"num_tasks", run.tasks.tasks.size()},
      {"seed", run.spec.seed},
      {"split_seed", run.tasks.seed},
      {"frames_per_video", fpv},
      {"frame_capacity", cap},
      {"memory_trace", result.memory_trace},
      {"wall_clock_seconds", result.wall_clock_seconds},
      {"final_acc", acc},
      {"final_bwf", bwf},
      {"digests",
       {{"config.json", file_digest(art.run_dir + "/config.json")},
        {"split.json", file_digest(art.run_dir + "/split.json")},
        {"matrix.csv", file_digest(art.matrix_csv)},
        {"metrics.json", file_digest(art.metrics_json)}}}};
  art.run_manifest = art.run_dir + "/run_manifest.json";
  {
    std::ofstream out(art.run_manifest, std::ios::binary);
    out << manifest_json.dump(2) << "\n";
  }
  return art;
}

}  // namespace vidcl::store
