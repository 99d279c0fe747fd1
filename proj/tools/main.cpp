#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vidcl/errors.hpp"
#include "vidcl/manifest.hpp"
#include "vidcl/report.hpp"
#include "vidcl/splits.hpp"
#include "vidcl/store.hpp"
#include "vidcl/synthetic.hpp"

namespace {

int cmd_split(const std::string& manifest_path, int num_tasks, std::uint64_t seed,
              bool trim, const std::string& out_path) {
  using namespace vidcl;
  auto manifest = data::load_manifest(manifest_path);
  int discarded = 0;
  double discarded_fraction = 0.0;
  if (manifest.trim_mode == data::TrimMode::untrimmed) {
    auto labeled = data::assign_untrimmed_labels(manifest);
    discarded = labeled.discarded_count;
    discarded_fraction = labeled.discarded_fraction;
    manifest = trim ? data::trim_manifest(labeled.manifest) : std::move(labeled.manifest);
  } else if (trim) {
    throw ConfigError("--trim applies to untrimmed manifests only");
  }

  const auto seq = data::generate_task_sequence(manifest, num_tasks, seed);
  const auto stats = data::split_stats(manifest, seq);

  nlohmann::json j = nlohmann::json::parse(data::serialize_task_sequence(seq));
  j["stats"] = {{"set", manifest.name},
                {"tasks", num_tasks},
                {"train_per_task", stats.train_per_task},
                {"val_per_task", stats.val_per_task},
                {"test_per_task", stats.test_per_task},
                {"classes_per_task_min", stats.min_classes_per_task},
                {"classes_per_task_max", stats.max_classes_per_task},
                {"avg_frames_per_video", stats.avg_frames_per_video},
                {"discarded_multi_label", discarded},
                {"discarded_fraction", discarded_fraction}};
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write split '" + out_path + "'");
  out << j.dump(2) << "\n";

  std::printf("%-24s %-6s %-11s %-9s %-10s %-13s %-10s\n", "Set", "Tasks", "Train/Task",
              "Val/Task", "Test/Task", "Classes/Task", "Frames/Vid");
  const std::string classes =
      stats.min_classes_per_task == stats.max_classes_per_task
          ? std::to_string(stats.min_classes_per_task)
          : std::to_string(stats.min_classes_per_task) + "-" +
                std::to_string(stats.max_classes_per_task);
  std::printf("%-24s %-6d %-11.1f %-9.1f %-10.1f %-13s %-10.1f\n",
              manifest.name.c_str(), num_tasks, stats.train_per_task,
              stats.val_per_task, stats.test_per_task, classes.c_str(),
              stats.avg_frames_per_video);
  if (discarded > 0)
    std::printf("discarded %d multi-label videos (%.4f%% of the manifest)\n", discarded,
                100.0 * discarded_fraction);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_synth(const vidcl::data::SyntheticConfig& cfg, const std::string& out_path) {
  const auto manifest = vidcl::data::generate_synthetic_dataset(cfg);
  vidcl::data::save_manifest(manifest, out_path);
  std::printf("wrote %s: %d classes, %zu records, %d frames each\n", out_path.c_str(),
              cfg.num_classes, manifest.records.size(), cfg.frames_per_video);
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& store_flag, bool force,
            bool dry_run) {
  using namespace vidcl;
  const auto spec = store::load_run_spec(config_path);
  const auto run = store::resolve_run(spec);
  if (dry_run) {
    for (const auto& line : store::dry_run_plan(run)) std::printf("%s\n", line.c_str());
    return 0;
  }
  const auto artifacts =
      store::execute_run(run, store::store_root(store_flag), force);
  std::printf("%s\n", artifacts.final_row.c_str());
  std::printf("artifacts: %s\n", artifacts.run_dir.c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
               bool no_plots) {
  const auto written = vidcl::report::emit_report(run_dirs, out_dir, !no_plots);
  std::vector<vidcl::report::RunSummary> runs;
  for (const auto& dir : run_dirs) runs.push_back(vidcl::report::load_run_summary(dir));
  std::printf("%s", vidcl::report::comparison_table_text(runs).c_str());
  for (const auto& path : written) std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-incremental video learning benchmark"};
  app.require_subcommand(1);

  // split
  std::string split_manifest, split_out = "split.json";
  int split_tasks = 10;
  std::uint64_t split_seed = 0;
  bool split_trim = false;
  auto* split = app.add_subcommand("split", "generate a class-incremental task split");
  split->add_option("--manifest", split_manifest, "manifest JSONL path")->required();
  split->add_option("--num-tasks", split_tasks, "number of tasks (paper splits: 10 or 20)");
  split->add_option("--seed", split_seed, "split seed");
  split->add_flag("--trim", split_trim, "expand untrimmed videos into per-segment records");
  split->add_option("--out", split_out, "output split JSON");

  // synth
  vidcl::data::SyntheticConfig synth_cfg;
  std::string synth_out = "synthetic.jsonl";
  auto* synth = app.add_subcommand("synth", "generate a synthetic video manifest");
  synth->add_option("--classes", synth_cfg.num_classes, "number of classes");
  synth->add_option("--videos-per-class", synth_cfg.videos_per_class, "videos per class");
  synth->add_option("--frames", synth_cfg.frames_per_video, "frames per video");
  synth->add_option("--height", synth_cfg.height, "frame height");
  synth->add_option("--width", synth_cfg.width, "frame width");
  synth->add_option("--seed", synth_cfg.seed, "dataset seed");
  synth->add_option("--temporal-strength", synth_cfg.temporal_strength,
                    "waveform swing scale (raises temporal dependence)");
  synth->add_option("--out", synth_out, "output manifest JSONL");

  // run
  std::string run_config, run_store;
  bool run_force = false, run_dry = false;
  auto* run = app.add_subcommand("run", "execute one experiment from a config");
  run->add_option("--config", run_config, "run config JSON")->required();
  run->add_option("--store", run_store, "experiment store root (default $VIDCL_STORE or ./runs)");
  run->add_flag("--force", run_force, "overwrite an existing run folder");
  run->add_flag("--dry-run", run_dry, "validate and print the task schedule only");

  // report
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  bool report_no_plots = false;
  auto* report = app.add_subcommand("report", "tables and plots from completed runs");
  report->add_option("runs", report_dirs, "run folders")->required();
  report->add_option("--out", report_out, "report output directory");
  report->add_flag("--no-plots", report_no_plots, "skip raster plot emission");

  try {
    app.parse(argc, argv);
    if (split->parsed())
      return cmd_split(split_manifest, split_tasks, split_seed, split_trim, split_out);
    if (synth->parsed()) return cmd_synth(synth_cfg, synth_out);
    if (run->parsed()) return cmd_run(run_config, run_store, run_force, run_dry);
    if (report->parsed()) return cmd_report(report_dirs, report_out, report_no_plots);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const vidcl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const vidcl::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
