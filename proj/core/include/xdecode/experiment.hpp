#pragma once

#include <filesystem>
#include <vector>

#include "xdecode/config.hpp"
#include "xdecode/metrics.hpp"
#include "xdecode/trainer.hpp"

namespace xdecode {

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> reports;
  TrainResult train_result;
};

// Trains the spec, then scores every test manifest. Artifacts land
// under runs_root/<name>/: the resolved config (config.json),
// checkpoints/, train_log.csv, epoch_log.csv and one report CSV per
// manifest.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::filesystem::path& runs_root);

// Runs experiments sequentially and writes runs_root/comparison.csv:
// one row per blur level, a ssim and psnr column per experiment, each
// taken from the experiment's first report.
std::filesystem::path run_grid(const std::vector<ExperimentSpec>& specs,
                               const std::filesystem::path& runs_root);

// Wraps the trained generator as an evaluation model: unit-range
// blurred image in, unit-range restored image out.
ModelFn generator_model(TrainState& state);

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest_csv,
                               const std::filesystem::path& out_csv);

// Blur-cap-vs-epoch line plot (PNG) plus the matching schedule CSV.
void emit_schedule_plot(const ScheduleConfig& cfg, int epochs,
                        const std::filesystem::path& out_png,
                        const std::filesystem::path& out_csv);

}  // namespace xdecode
