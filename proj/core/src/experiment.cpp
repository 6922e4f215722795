#include "xdecode/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "xdecode/error.hpp"
#include "xdecode/image_io.hpp"
#include "xdecode/imaging.hpp"
#include "xdecode/schedule.hpp"

namespace xdecode {

namespace fs = std::filesystem;

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                      ? c
                      : '_');
  return out.empty() ? std::string("report") : out;
}

// report_<id>.csv named after the manifest's directory (manifests are
// usually all called manifest.csv), deduplicated within the run.
fs::path report_path(const fs::path& run_dir, const fs::path& manifest,
                     std::set<std::string>& used) {
  std::string id = manifest.parent_path().filename().string();
  if (id.empty() || id == ".") id = manifest.stem().string();
  id = sanitize(id);
  std::string candidate = id;
  int suffix = 2;
  while (!used.insert(candidate).second) candidate = id + "_" + std::to_string(suffix++);
  return run_dir / ("report_" + candidate + ".csv");
}

}  // namespace

ModelFn generator_model(TrainState& state) {
  const int depth = state.generator->config().depth;
  const int granularity = 1 << depth;
  return [&state, granularity](const ImageTensor& blurred) {
    if (blurred.channels != state.generator->config().in_channels)
      throw Error(Errc::eval_failed,
                  "generator expects " +
                      std::to_string(state.generator->config().in_channels) +
                      "-channel images, got " + std::to_string(blurred.channels));
    if (blurred.height % granularity != 0 || blurred.width % granularity != 0)
      throw Error(Errc::eval_failed,
                  "image size " + std::to_string(blurred.width) + "x" +
                      std::to_string(blurred.height) + " is not a multiple of " +
                      std::to_string(granularity) + " (generator depth)");
    const Tensor x = pack_image(to_signed(blurred));
    const Tensor y = state.generator->forward(x);
    ImageTensor out = unpack_image(y, 0, RangeTag::unit);
    for (float& v : out.data) v = std::clamp((v + 1.f) * 0.5f, 0.f, 1.f);
    return out;
  };
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const fs::path& manifest_csv,
                               const fs::path& out_csv) {
  std::unique_ptr<TrainState> state = load_checkpoint(checkpoint);
  const TestsetManifest manifest = read_manifest(manifest_csv);
  EvalReport report = evaluate(generator_model(*state), manifest);
  report.checkpoint_id = checkpoint.filename().string();
  report.dataset_id = manifest_csv.parent_path().filename().string();
  write_eval_report(report, out_csv);
  return report;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const fs::path& runs_root) {
  spec.validate();
  const fs::path run_dir = runs_root / spec.name;
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw Error(Errc::write_failed, "cannot create " + run_dir.string());

  {
    // The run directory explains itself: the exact resolved config
    // goes in next to the artifacts.
    std::ofstream os(run_dir / "config.json");
    os << serialize(spec);
    if (!os.flush())
      throw Error(Errc::write_failed, "cannot write " + (run_dir / "config.json").string());
  }

  ExperimentResult result;
  result.run_dir = run_dir;
  result.train_result = train(spec.train, spec.train_corpus, run_dir);
  result.checkpoint = result.train_result.checkpoint_path;

  std::set<std::string> used_report_ids;
  for (const fs::path& manifest : spec.test_manifests) {
    const fs::path out_csv = report_path(run_dir, manifest, used_report_ids);
    evaluate_checkpoint(result.checkpoint, manifest, out_csv);
    result.reports.push_back(out_csv);
  }
  return result;
}

namespace {

std::string format_metric(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

fs::path run_grid(const std::vector<ExperimentSpec>& specs, const fs::path& runs_root) {
  if (specs.empty()) throw Error(Errc::invalid_config, "grid has no experiments");
  std::set<std::string> names;
  for (const ExperimentSpec& spec : specs) {
    if (!names.insert(spec.name).second)
      throw Error(Errc::invalid_config, "duplicate experiment name \"" + spec.name + "\"");
    if (spec.test_manifests.empty())
      throw Error(Errc::invalid_config,
                  "grid experiment \"" + spec.name + "\" has no test manifests");
  }

  std::vector<ExperimentResult> results;
  for (const ExperimentSpec& spec : specs)
    results.push_back(run_experiment(spec, runs_root));

  // Side-by-side table over the first report of each run: one row per
  // blur level, ssim and psnr columns per experiment.
  std::vector<EvalReport> reports;
  for (const ExperimentResult& r : results)
    reports.push_back(read_eval_report(r.reports.front()));

  std::vector<std::string> levels;
  std::set<std::string> seen_levels;
  for (const EvalReport& rep : reports)
    for (const EvalRow& row : rep.rows)
      if (row.blur_level != "all" && seen_levels.insert(row.blur_level).second)
        levels.push_back(row.blur_level);
  std::sort(levels.begin(), levels.end(),
            [](const std::string& a, const std::string& b) {
              return std::stoi(a) < std::stoi(b);
            });
  levels.push_back("all");

  const fs::path out = runs_root / "comparison.csv";
  std::ofstream os(out);
  if (!os) throw Error(Errc::write_failed, "cannot write " + out.string());
  os << "blur_level";
  for (size_t i = 0; i < specs.size(); ++i)
    os << "," << specs[i].name << "_ssim," << specs[i].name << "_psnr";
  os << "\n";
  for (const std::string& level : levels) {
    os << level;
    for (const EvalReport& rep : reports) {
      const EvalRow* found = nullptr;
      for (const EvalRow& row : rep.rows)
        if (row.blur_level == level) found = &row;
      if (found)
        os << "," << format_metric(found->ssim) << "," << format_metric(found->psnr);
      else
        os << ",,";
    }
    os << "\n";
  }
  if (!os.flush()) throw Error(Errc::write_failed, "cannot write " + out.string());
  return out;
}

// ---- schedule plot -------------------------------------------------

namespace {

// 3x5 digit glyphs, row-major bits.
constexpr uint16_t kDigits[10] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
};

struct Raster {
  ImageTensor img;

  Raster(int h, int w) : img(h, w, 3, RangeTag::unit, 1.f) {}

  void set(int x, int y, float r, float g, float b) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    img.at(0, y, x) = r;
    img.at(1, y, x) = g;
    img.at(2, y, x) = b;
  }

  void line(int x0, int y0, int x1, int y1, float r, float g, float b) {
    // Bresenham, with a 2px vertical fattening so slopes stay visible.
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int x = x0, y = y0;
    while (true) {
      set(x, y, r, g, b);
      set(x, y + 1, r, g, b);
      if (x == x1 && y == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  }

  void digit(int x, int y, int d, float r, float g, float b) {
    const uint16_t bits = kDigits[d];
    for (int row = 0; row < 5; ++row)
      for (int col = 0; col < 3; ++col)
        if (bits >> ((4 - row) * 3 + (2 - col)) & 1) set(x + col, y + row, r, g, b);
  }

  void number(int x, int y, int value) {
    std::string s = std::to_string(value);
    for (size_t i = 0; i < s.size(); ++i)
      digit(x + static_cast<int>(i) * 4, y, s[i] - '0', 0.1f, 0.1f, 0.1f);
  }
};

}  // namespace

void emit_schedule_plot(const ScheduleConfig& cfg, int epochs, const fs::path& out_png,
                        const fs::path& out_csv) {
  if (epochs < 1) throw Error(Errc::invalid_epoch, "plot needs at least one epoch");
  write_schedule_csv(cfg, epochs, out_csv);
  const auto table = schedule_table(cfg, epochs);

  const int W = 640, H = 360;
  const int ml = 40, mr = 14, mt = 14, mb = 30;  // margins
  Raster r(H, W);

  const int y_lo = 0;
  const int y_hi = cfg.b_max.value + 2;
  auto px = [&](int epoch) {
    return ml + static_cast<int>(std::lround(
                    (W - ml - mr - 1) *
                    (epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 0.0)));
  };
  auto py = [&](double cap) {
    return mt + static_cast<int>(std::lround(
                    (H - mt - mb - 1) * (1.0 - (cap - y_lo) / (y_hi - y_lo))));
  };

  // Light horizontal guides at every odd level, darker at min and max.
  for (int level = cfg.b_min.value; level <= cfg.b_max.value; level += 2) {
    const float shade = (level == cfg.b_min.value || level == cfg.b_max.value) ? 0.75f : 0.92f;
    r.line(ml, py(level), W - mr - 1, py(level), shade, shade, shade);
    if (level == cfg.b_min.value || level == cfg.b_max.value)
      r.number(6, py(level) - 2, level);
  }

  // Axes.
  r.line(ml, mt, ml, H - mb, 0.f, 0.f, 0.f);
  r.line(ml, H - mb, W - mr - 1, H - mb, 0.f, 0.f, 0.f);
  const int ticks[3] = {0, (epochs - 1) / 2, epochs - 1};
  for (int tick : ticks) {
    r.line(px(tick), H - mb, px(tick), H - mb + 3, 0.f, 0.f, 0.f);
    r.number(px(tick) - 3, H - mb + 6, tick);
  }

  // The progression itself.
  for (size_t i = 1; i < table.size(); ++i)
    r.line(px(table[i - 1].first), py(table[i - 1].second.value), px(table[i].first),
           py(table[i].second.value), 0.13f, 0.29f, 0.62f);

  save_image(r.img, out_png);
}

}  // namespace xdecode
