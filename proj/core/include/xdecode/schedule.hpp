#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xdecode/image.hpp"
#include "xdecode/rng.hpp"

namespace xdecode {

// Blur-level progression over epochs.
enum class ScheduleKind {
  step5,        // +2 every 5 epochs
  step10,       // +2 every 10 epochs
  linear,       // +2 every epoch
  sigmoid,      // b_max * sigmoid(k*(t-m)), clamped, rounded to odd
  exponential,  // 2*floor(b0*r^(t/s)/2)+1, capped
  fixed         // b_max throughout
};

enum class EpochBase { zero, one };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::linear;
  BlurLevel b_min{3};
  BlurLevel b_max{29};
  double k_growth = 0.1;    // sigmoid growth rate
  double midpoint = 50.0;   // sigmoid midpoint
  double ratio = 1.15;      // exponential growth rate
  int step_interval = 6;    // exponential step divisor
  BlurLevel b0{3};          // exponential starting level
  EpochBase epoch_base = EpochBase::zero;

  void validate() const;
};

struct CurriculumState {
  int epoch = 0;
  BlurLevel cap{3};
};

// Blur cap for epoch t under the given progression. Always an odd
// integer in [b_min, b_max]. Throws invalid-epoch for t before the
// epoch base.
BlurLevel cap_at_epoch(const ScheduleConfig& cfg, int t);

CurriculumState curriculum_state_at(const ScheduleConfig& cfg, int t);

// Uniform draw from the odd levels {floor, floor+2, ..., cap}.
// Throws invalid-range when floor > cap.
BlurLevel sample_kernel(BlurLevel cap, BlurLevel floor, Rng& rng);

std::vector<std::pair<int, BlurLevel>> schedule_table(const ScheduleConfig& cfg, int n_epochs);

// CSV with header "epoch,blur_cap".
void write_schedule_csv(const ScheduleConfig& cfg, int n_epochs,
                        const std::filesystem::path& out);

// Nearest odd integer; exact midpoints round up.
int round_to_odd(double x);

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind kind);

}  // namespace xdecode
