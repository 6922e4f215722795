#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xdecode/datapipe.hpp"
#include "xdecode/losses.hpp"
#include "xdecode/model.hpp"
#include "xdecode/schedule.hpp"

namespace xdecode {

enum class LrMode { fixed, scheduled };
enum class AdvLoss { hinge, bce };

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double lr = 2e-4;
  LrMode lr_mode = LrMode::fixed;
  bool mixed_precision = false;
  ScheduleConfig schedule;
  MixingConfig mixing;
  LossWeights weights;
  uint64_t seed = 0;
  int image_size = 256;
  // Shared width for generator and discriminator stacks.
  int base_width = 64;
  AdvLoss adversarial = AdvLoss::hinge;
  // Lowest kernel drawn each epoch; the cap comes from the schedule.
  int blur_floor = kMinBlurLevel;
  // Gradient loss scaling for the emulated-fp16 path.
  double loss_scale = 512.0;
  // Quarter-width perceptual feature net (desk-scale speed).
  bool thin_features = false;
  bool keep_all_checkpoints = false;

  void validate() const;

  // Paper-scale settings need server hardware; the desk profile keeps
  // the same pipeline at laptop size.
  static TrainConfig desk_profile();
  static TrainConfig paper_profile();
};

// Learning rate at epoch t: fixed, or constant for the first half of
// training then linear decay to zero at the final epoch.
double lr_schedule(LrMode mode, int t, const TrainConfig& cfg);

// Everything train_step touches, owned by train() but exposed so tests
// can drive single steps directly.
struct TrainState {
  TrainConfig cfg;
  std::unique_ptr<UNetGenerator> generator;
  std::unique_ptr<PatchDiscriminator> discriminator;
  std::unique_ptr<FeatureExtractor> features;
  std::unique_ptr<nn::Adam> opt_g;
  std::unique_ptr<nn::Adam> opt_d;
  Rng rng;
  int epoch = 0;          // completed epochs
  int64_t global_step = 0;

  explicit TrainState(const TrainConfig& cfg);
};

// Batch already packed for the networks, signed range.
struct PackedBatch {
  Tensor input;
  Tensor target;
  std::vector<std::optional<BlurLevel>> kernels;  // per sample
};

PackedBatch pack_pairs(const std::vector<PairSample>& pairs);

// One discriminator update followed by one generator update on the
// same batch. Throws on non-finite losses; with mixed precision on,
// non-finite scaled gradients skip the update instead.
LossReport train_step(TrainState& state, const PackedBatch& batch, double lr);

struct EpochStats {
  int epoch = 0;
  int blur_cap = 0;
  double lr = 0.0;
  LossReport mean;
  std::vector<int> kernels_used;  // one entry per blurred sample drawn
  int64_t steps = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;  // epochs run in this call
  std::filesystem::path checkpoint_path;
  std::filesystem::path log_path;
  int64_t total_steps = 0;
};

// Full curriculum training loop. Writes train_log.csv (header
// step,epoch,perc,l1,hinge_g,hinge_d,total_g), epoch_log.csv and
// per-epoch checkpoints under out_dir. `resume` continues a previous
// run bit-exactly (mixed precision off).
TrainResult train(const TrainConfig& cfg, const DatasetSpec& corpus,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume = {});

// Checkpoint archive: format tag, resolved config, epoch and step
// counters, rng state, weights and optimizer moments. Writes are
// atomic (temp file then rename).
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);

// Restores everything; the TrainState is rebuilt from the stored
// config first.
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);

// Header-only read: the stored config and counters, no weights.
struct CheckpointInfo {
  TrainConfig config;
  int epoch = 0;
  int64_t global_step = 0;
};
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

const char* to_string(LrMode mode);
const char* to_string(AdvLoss loss);
LrMode lr_mode_from_string(const std::string& s);
AdvLoss adv_loss_from_string(const std::string& s);

}  // namespace xdecode
