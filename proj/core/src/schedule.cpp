#include "xdecode/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace xdecode {

void ScheduleConfig::validate() const {
  // Levels parsed from config files bypass BlurLevel::checked, so re-verify here.
  for (int v : {b_min.value, b_max.value, b0.value}) {
    if (v < kMinBlurLevel || v > kMaxBlurLevel || v % 2 == 0) {
      throw Error(Errc::invalid_config,
                  "schedule: blur levels must be odd integers in [3, 29], got " +
                      std::to_string(v));
    }
  }
  if (b_min.value > b_max.value) {
    throw Error(Errc::invalid_config, "schedule: b_min > b_max");
  }
  if (b0.value < b_min.value || b0.value > b_max.value) {
    throw Error(Errc::invalid_config, "schedule: b0 outside [b_min, b_max]");
  }
  if (k_growth <= 0) throw Error(Errc::invalid_config, "schedule: k_growth must be > 0");
  if (ratio <= 1) throw Error(Errc::invalid_config, "schedule: ratio must be > 1");
  if (step_interval < 1) throw Error(Errc::invalid_config, "schedule: step_interval must be >= 1");
}

int round_to_odd(double x) {
  // greatest odd <= x, then its successor; ties go up
  const int lo = 2 * static_cast<int>(std::floor((x - 1.0) / 2.0)) + 1;
  const int hi = lo + 2;
  return (x - lo < hi - x) ? lo : hi;
}

BlurLevel cap_at_epoch(const ScheduleConfig& cfg, int t) {
  const int base = cfg.epoch_base == EpochBase::one ? 1 : 0;
  if (t < base) {
    throw Error(Errc::invalid_epoch, "epoch " + std::to_string(t) + " before epoch base");
  }
  t -= base;

  const int lo = cfg.b_min.value;
  const int hi = cfg.b_max.value;
  int cap = hi;
  switch (cfg.kind) {
    case ScheduleKind::step5:
      cap = std::min(lo + 2 * (t / 5), hi);
      break;
    case ScheduleKind::step10:
      cap = std::min(lo + 2 * (t / 10), hi);
      break;
    case ScheduleKind::linear:
      cap = std::min(lo + 2 * t, hi);
      break;
    case ScheduleKind::sigmoid: {
      const double raw = hi / (1.0 + std::exp(-cfg.k_growth * (t - cfg.midpoint)));
      cap = round_to_odd(std::clamp(raw, static_cast<double>(lo), static_cast<double>(hi)));
      break;
    }
    case ScheduleKind::exponential: {
      // real-valued exponent t/s; the floor already quantizes the level
      const double grown = cfg.b0.value * std::pow(cfg.ratio, static_cast<double>(t) / cfg.step_interval);
      const double odd = 2.0 * std::floor(grown / 2.0) + 1.0;
      cap = static_cast<int>(std::min(odd, static_cast<double>(hi)));
      break;
    }
    case ScheduleKind::fixed:
      cap = hi;
      break;
  }
  return BlurLevel{cap};
}

CurriculumState curriculum_state_at(const ScheduleConfig& cfg, int t) {
  return CurriculumState{t, cap_at_epoch(cfg, t)};
}

BlurLevel sample_kernel(BlurLevel cap, BlurLevel floor, Rng& rng) {
  if (floor.value > cap.value) {
    throw Error(Errc::invalid_range,
                "kernel floor " + std::to_string(floor.value) + " > cap " +
                    std::to_string(cap.value));
  }
  const int count = (cap.value - floor.value) / 2 + 1;
  const int idx = static_cast<int>(rng.below(static_cast<uint64_t>(count)));
  return BlurLevel{floor.value + 2 * idx};
}

std::vector<std::pair<int, BlurLevel>> schedule_table(const ScheduleConfig& cfg, int n_epochs) {
  const int base = cfg.epoch_base == EpochBase::one ? 1 : 0;
  std::vector<std::pair<int, BlurLevel>> rows;
  rows.reserve(n_epochs);
  for (int t = base; t < base + n_epochs; ++t) {
    rows.emplace_back(t, cap_at_epoch(cfg, t));
  }
  return rows;
}

void write_schedule_csv(const ScheduleConfig& cfg, int n_epochs,
                        const std::filesystem::path& out) {
  std::ofstream f(out);
  if (!f) throw Error(Errc::write_failed, "cannot write " + out.string());
  f << "epoch,blur_cap\n";
  for (const auto& [epoch, cap] : schedule_table(cfg, n_epochs)) {
    f << epoch << "," << cap.value << "\n";
  }
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "step5") return ScheduleKind::step5;
  if (s == "step10") return ScheduleKind::step10;
  if (s == "linear") return ScheduleKind::linear;
  if (s == "sigmoid") return ScheduleKind::sigmoid;
  if (s == "exponential") return ScheduleKind::exponential;
  if (s == "fixed") return ScheduleKind::fixed;
  throw Error(Errc::type_mismatch, "unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::step5: return "step5";
    case ScheduleKind::step10: return "step10";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::sigmoid: return "sigmoid";
    case ScheduleKind::exponential: return "exponential";
    case ScheduleKind::fixed: return "fixed";
  }
  return "?";
}

}  // namespace xdecode
