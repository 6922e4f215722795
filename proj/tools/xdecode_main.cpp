// Command-line front end: schedule inspection, offline test-set
// generation, training, evaluation and full experiment runs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xdecode/config.hpp"
#include "xdecode/datapipe.hpp"
#include "xdecode/error.hpp"
#include "xdecode/experiment.hpp"
#include "xdecode/metrics.hpp"
#include "xdecode/schedule.hpp"
#include "xdecode/trainer.hpp"

namespace {

using namespace xdecode;

struct ScheduleArgs {
  std::string kind = "linear";
  int epochs = 100;
  int b_min = kMinBlurLevel;
  int b_max = kMaxBlurLevel;
  double k_growth = 0.1;
  double midpoint = 50.0;
  double ratio = 1.15;
  int step_interval = 6;
  int b0 = kMinBlurLevel;
  std::string out;
  std::string plot;
};

ScheduleConfig to_schedule_config(const ScheduleArgs& a) {
  ScheduleConfig cfg;
  cfg.kind = schedule_kind_from_string(a.kind);
  cfg.b_min = BlurLevel::checked(a.b_min);
  cfg.b_max = BlurLevel::checked(a.b_max);
  cfg.k_growth = a.k_growth;
  cfg.midpoint = a.midpoint;
  cfg.ratio = a.ratio;
  cfg.step_interval = a.step_interval;
  cfg.b0 = BlurLevel::checked(a.b0);
  cfg.validate();
  return cfg;
}

int cmd_schedule(const ScheduleArgs& a) {
  const ScheduleConfig cfg = to_schedule_config(a);
  std::cout << "epoch,blur_cap\n";
  for (const auto& [epoch, cap] : schedule_table(cfg, a.epochs))
    std::cout << epoch << "," << cap.value << "\n";
  if (!a.out.empty()) write_schedule_csv(cfg, a.epochs, a.out);
  if (!a.plot.empty()) {
    std::filesystem::path csv = a.out.empty()
                                    ? std::filesystem::path(a.plot).replace_extension(".csv")
                                    : std::filesystem::path(a.out);
    emit_schedule_plot(cfg, a.epochs, a.plot, csv);
    std::cout << "# plot written to " << a.plot << "\n";
  }
  return 0;
}

struct TestsetArgs {
  std::string root;
  std::string kind = "flat_folder";
  std::string split = "test";
  std::string out;
  std::vector<int> levels;
  uint64_t seed = 0;
  int image_size = 0;  // 0 keeps native size
};

int cmd_gen_testset(const TestsetArgs& a) {
  DatasetSpec spec;
  if (a.image_size > 0) {
    spec = DatasetSpec::with_defaults(a.root, dataset_kind_from_string(a.kind),
                                      a.split == "train" ? Split::train : Split::test,
                                      a.image_size);
  } else {
    spec.root = a.root;
    spec.kind = dataset_kind_from_string(a.kind);
    spec.split = a.split == "train" ? Split::train : Split::test;
  }
  std::vector<BlurLevel> levels;
  if (a.levels.empty()) {
    levels = default_extreme_levels();
  } else {
    for (int v : a.levels) levels.push_back(BlurLevel::checked(v));
  }
  const TestsetManifest manifest = generate_extreme_testset(spec, a.out, levels, a.seed);
  std::cout << "wrote " << manifest.rows.size() << " pairs under " << a.out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& runs_root,
              const std::string& resume) {
  ExperimentSpec spec = parse_config(config_path);
  const std::filesystem::path run_dir = std::filesystem::path(runs_root) / spec.name;
  std::filesystem::create_directories(run_dir);
  {
    std::ofstream os(run_dir / "config.json");
    os << serialize(spec);
    if (!os.flush())
      throw Error(Errc::write_failed, "cannot write " + (run_dir / "config.json").string());
  }
  std::optional<std::filesystem::path> resume_path;
  if (!resume.empty()) resume_path = resume;
  const TrainResult result = train(spec.train, spec.train_corpus, run_dir, resume_path);
  std::cout << "trained " << result.epochs.size() << " epoch(s), checkpoint at "
            << result.checkpoint_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& out) {
  const EvalReport report = evaluate_checkpoint(checkpoint, manifest, out);
  std::cout << format_eval_table(report);
  std::cout << "report written to " << out << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& runs_root) {
  const ExperimentSpec spec = parse_config(config_path);
  const ExperimentResult result = run_experiment(spec, runs_root);
  for (const auto& report_csv : result.reports) {
    std::cout << report_csv.filename().string() << ":\n"
              << format_eval_table(read_eval_report(report_csv));
  }
  std::cout << "artifacts under " << result.run_dir.string() << "\n";
  return 0;
}

int cmd_grid(const std::vector<std::string>& config_paths, const std::string& runs_root) {
  std::vector<ExperimentSpec> specs;
  for (const std::string& p : config_paths) specs.push_back(parse_config(p));
  const std::filesystem::path comparison = run_grid(specs, runs_root);
  std::cout << "comparison written to " << comparison.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum-trained GAN deblurring for extreme box blurs"};
  app.require_subcommand(1);

  ScheduleArgs sched;
  CLI::App* schedule_cmd =
      app.add_subcommand("schedule", "Print or export a blur-level progression");
  schedule_cmd->add_option("--kind", sched.kind,
                           "step5|step10|linear|sigmoid|exponential|fixed");
  schedule_cmd->add_option("--epochs", sched.epochs, "Epochs to tabulate");
  schedule_cmd->add_option("--b-min", sched.b_min, "Lowest blur level");
  schedule_cmd->add_option("--b-max", sched.b_max, "Highest blur level");
  schedule_cmd->add_option("--k-growth", sched.k_growth, "Sigmoid growth rate");
  schedule_cmd->add_option("--midpoint", sched.midpoint, "Sigmoid midpoint epoch");
  schedule_cmd->add_option("--ratio", sched.ratio, "Exponential growth ratio");
  schedule_cmd->add_option("--step-interval", sched.step_interval,
                           "Exponential step divisor");
  schedule_cmd->add_option("--b0", sched.b0, "Exponential starting level");
  schedule_cmd->add_option("--out", sched.out, "Schedule CSV path");
  schedule_cmd->add_option("--plot", sched.plot, "Schedule plot PNG path");

  TestsetArgs ts;
  CLI::App* testset_cmd =
      app.add_subcommand("gen-testset", "Generate a frozen blurred test set");
  testset_cmd->add_option("--root", ts.root, "Sharp image corpus root")->required();
  testset_cmd->add_option("--kind", ts.kind, "gopro|kitti|cityscapes|pascalvoc|flat_folder");
  testset_cmd->add_option("--split", ts.split, "train|test");
  testset_cmd->add_option("--out", ts.out, "Output directory")->required();
  testset_cmd->add_option("--levels", ts.levels, "Blur levels (default 19..29 odd)");
  testset_cmd->add_option("--seed", ts.seed, "Generation seed (recorded)");
  testset_cmd->add_option("--image-size", ts.image_size,
                          "Resize edge before blurring (0 keeps native)");

  std::string config_path, runs_root = "runs", resume, checkpoint, manifest, out;
  CLI::App* train_cmd = app.add_subcommand("train", "Train from a config file");
  train_cmd->add_option("--config", config_path, "Experiment config JSON")->required();
  train_cmd->add_option("--runs-root", runs_root, "Runs directory");
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a test set");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--manifest", manifest, "Test-set manifest CSV")->required();
  eval_cmd->add_option("--out", out, "Report CSV path")->required();

  CLI::App* run_cmd = app.add_subcommand("run", "Train then evaluate (full experiment)");
  run_cmd->add_option("--config", config_path, "Experiment config JSON")->required();
  run_cmd->add_option("--runs-root", runs_root, "Runs directory");

  std::vector<std::string> grid_configs;
  CLI::App* grid_cmd = app.add_subcommand("grid", "Run several experiments and compare");
  grid_cmd->add_option("--config", grid_configs, "Config JSON (repeatable)")->required();
  grid_cmd->add_option("--runs-root", runs_root, "Runs directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*schedule_cmd) return cmd_schedule(sched);
    if (*testset_cmd) return cmd_gen_testset(ts);
    if (*train_cmd) return cmd_train(config_path, runs_root, resume);
    if (*eval_cmd) return cmd_eval(checkpoint, manifest, out);
    if (*run_cmd) return cmd_run(config_path, runs_root);
    if (*grid_cmd) return cmd_grid(grid_configs, runs_root);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
