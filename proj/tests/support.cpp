#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "xdecode/image_io.hpp"

#ifndef _WIN32
#include <sys/wait.h>
#endif

namespace xdecode::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<uint64_t> counter{0};
  std::random_device rd;
  std::ostringstream name;
  name << "xdk_" << tag << "_" << std::hex << rd() << "_" << counter++;
  path_ = fs::temp_directory_path() / name.str();
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

ImageTensor random_image(Rng& rng, int h, int w, int c, RangeTag range) {
  ImageTensor img(h, w, c, range);
  const float lo = img.range_lo();
  for (float& v : img.data) v = lo + static_cast<float>(rng.uniform01()) * (1.f - lo);
  return img;
}

Tensor random_tensor(Rng& rng, int n, int c, int h, int w, double stddev) {
  Tensor t(n, c, h, w);
  for (float& v : t.v) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

ImageTensor toy_image(Rng& rng, int size) {
  ImageTensor img(size, size, 3, RangeTag::unit);

  // Two-corner gradient background.
  float c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = 0.15f + 0.5f * static_cast<float>(rng.uniform01());
    c1[c] = 0.15f + 0.5f * static_cast<float>(rng.uniform01());
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float t = static_cast<float>(x + y) / (2.f * (size - 1));
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] + t * (c1[c] - c0[c]);
    }
  }

  auto rand_color = [&](float* col) {
    for (int c = 0; c < 3; ++c) col[c] = static_cast<float>(rng.uniform01());
  };

  // Many small shapes rather than a few large ones: scenes dominated
  // by flat paint score near-perfect SSIM even blurred, which leaves a
  // restoration model nothing measurable to win.
  const int n_rects = 8 + static_cast<int>(rng.below(6));
  for (int r = 0; r < n_rects; ++r) {
    const int w = std::max(1, size / 12) + static_cast<int>(rng.below(std::max(1, size / 5)));
    const int h = std::max(1, size / 12) + static_cast<int>(rng.below(std::max(1, size / 5)));
    const int x0 = static_cast<int>(rng.below(std::max(1, size - w)));
    const int y0 = static_cast<int>(rng.below(std::max(1, size - h)));
    float col[3];
    rand_color(col);
    for (int y = y0; y < std::min(size, y0 + h); ++y)
      for (int x = x0; x < std::min(size, x0 + w); ++x)
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
  }

  const int n_discs = 3 + static_cast<int>(rng.below(4));
  for (int d = 0; d < n_discs; ++d) {
    const int rad =
        std::max(1, size / 16) + static_cast<int>(rng.below(std::max(1, size / 10)));
    const int cx = rad + static_cast<int>(rng.below(std::max(1, size - 2 * rad)));
    const int cy = rad + static_cast<int>(rng.below(std::max(1, size - 2 * rad)));
    float col[3];
    rand_color(col);
    for (int y = std::max(0, cy - rad); y < std::min(size, cy + rad + 1); ++y)
      for (int x = std::max(0, cx - rad); x < std::min(size, cx + rad + 1); ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
  }

  // Thin full-span lines: a box blur all but erases them, so they are
  // exactly the content where restoration can beat the blurred input.
  const int n_lines = 2 + static_cast<int>(rng.below(3));
  for (int l = 0; l < n_lines; ++l) {
    float col[3];
    rand_color(col);
    const int thick = 1 + static_cast<int>(rng.below(2));
    if (rng.below(2) == 0) {
      const int y0 = static_cast<int>(rng.below(std::max(1, size - thick)));
      for (int y = y0; y < std::min(size, y0 + thick); ++y)
        for (int x = 0; x < size; ++x)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
    } else {
      const int x0 = static_cast<int>(rng.below(std::max(1, size - thick)));
      for (int x = x0; x < std::min(size, x0 + thick); ++x)
        for (int y = 0; y < size; ++y)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
    }
  }
  return img;
}

std::vector<fs::path> make_toy_corpus(const fs::path& dir, int n, int size, uint64_t seed) {
  fs::create_directories(dir);
  Rng rng(seed);
  std::vector<fs::path> paths;
  for (int i = 0; i < n; ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(3) << std::setfill('0') << i << ".png";
    fs::path p = dir / name.str();
    save_image(toy_image(rng, size), p);
    paths.push_back(p);
  }
  return paths;
}

namespace {

double rel_err(double num, double ana) {
  const double denom = std::max(std::abs(num), std::abs(ana));
  if (denom < 1e-9) return 0.0;
  return std::abs(num - ana) / denom;
}

}  // namespace

double fd_max_rel_error(const std::function<double(const Tensor&)>& f, Tensor x,
                        const Tensor& dx, double eps, int n_probes, Rng& rng) {
  double worst = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const size_t i = rng.below(x.size());
    const float keep = x.v[i];
    x.v[i] = keep + static_cast<float>(eps);
    const double fp = f(x);
    x.v[i] = keep - static_cast<float>(eps);
    const double fm = f(x);
    x.v[i] = keep;
    const double num = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, rel_err(num, dx.v[i]));
  }
  return worst;
}

double fd_max_rel_error_values(const std::function<double()>& f, std::vector<float>& values,
                               const std::vector<float>& grads, double eps, int n_probes,
                               Rng& rng) {
  double worst = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const size_t i = rng.below(values.size());
    const float keep = values[i];
    values[i] = keep + static_cast<float>(eps);
    const double fp = f();
    values[i] = keep - static_cast<float>(eps);
    const double fm = f();
    values[i] = keep;
    const double num = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, rel_err(num, grads[i]));
  }
  return worst;
}

namespace {

// Fold an index into [0, n) by repeated edge reflection without
// repeating the edge sample.
int fold101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

ImageTensor box_blur_reference(const ImageTensor& img, int k) {
  const int r = k / 2;
  ImageTensor out(img.height, img.width, img.channels, img.range);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += img.at(c, fold101(y + dy, img.height), fold101(x + dx, img.width));
        out.at(c, y, x) = static_cast<float>(acc / (static_cast<double>(k) * k));
      }
    }
  }
  return out;
}

double ssim_reference(const ImageTensor& a, const ImageTensor& b,
                      const GaussianWindowSpec& win) {
  const int k = win.size;
  std::vector<double> w(static_cast<size_t>(k) * k);
  const int r = k / 2;
  double wsum = 0.0;
  for (int y = 0; y < k; ++y) {
    for (int x = 0; x < k; ++x) {
      const double dy = y - r, dx = x - r;
      w[y * k + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * win.sigma * win.sigma));
      wsum += w[y * k + x];
    }
  }
  for (double& v : w) v /= wsum;

  const double c1 = (win.k1 * win.peak) * (win.k1 * win.peak);
  const double c2 = (win.k2 * win.peak) * (win.k2 * win.peak);

  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    double acc = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + k <= a.height; ++y0) {
      for (int x0 = 0; x0 + k <= a.width; ++x0) {
        double mu_a = 0, mu_b = 0;
        for (int y = 0; y < k; ++y)
          for (int x = 0; x < k; ++x) {
            mu_a += w[y * k + x] * a.at(ch, y0 + y, x0 + x);
            mu_b += w[y * k + x] * b.at(ch, y0 + y, x0 + x);
          }
        double var_a = 0, var_b = 0, cov = 0;
        for (int y = 0; y < k; ++y)
          for (int x = 0; x < k; ++x) {
            const double da = a.at(ch, y0 + y, x0 + x) - mu_a;
            const double db = b.at(ch, y0 + y, x0 + x) - mu_b;
            var_a += w[y * k + x] * da * da;
            var_b += w[y * k + x] * db * db;
            cov += w[y * k + x] * da * db;
          }
        const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        acc += num / den;
        ++count;
      }
    }
    total += acc / count;
  }
  return total / a.channels;
}

double psnr_reference(const ImageTensor& a, const ImageTensor& b, double peak) {
  double se = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / a.size();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

// Nearest odd integer, midpoints toward the larger candidate. Written
// from the two odd neighbours rather than arithmetic tricks.
int odd_round(double x) {
  int lo = static_cast<int>(std::floor(x));
  if (lo % 2 == 0) --lo;
  const int hi = lo + 2;
  return (x - lo < hi - x) ? lo : hi;
}

}  // namespace

int schedule_oracle(const ScheduleConfig& cfg, int t) {
  if (cfg.epoch_base == EpochBase::one) --t;
  const int bmin = cfg.b_min.value, bmax = cfg.b_max.value;
  switch (cfg.kind) {
    case ScheduleKind::step5:
      return std::min(bmin + 2 * (t / 5), bmax);
    case ScheduleKind::step10:
      return std::min(bmin + 2 * (t / 10), bmax);
    case ScheduleKind::linear:
      return std::min(bmin + 2 * t, bmax);
    case ScheduleKind::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-cfg.k_growth * (t - cfg.midpoint)));
      double v = bmax * s;
      v = std::min(std::max(v, static_cast<double>(bmin)), static_cast<double>(bmax));
      return std::min(std::max(odd_round(v), bmin), bmax);
    }
    case ScheduleKind::exponential: {
      const double v = cfg.b0.value * std::pow(cfg.ratio, static_cast<double>(t) / cfg.step_interval);
      const int b = 2 * static_cast<int>(std::floor(v / 2.0)) + 1;
      return std::min(std::max(b, bmin), bmax);
    }
    case ScheduleKind::fixed:
      return bmax;
  }
  return bmax;
}

int run_command(const std::string& cmd, const fs::path& capture_file) {
  const std::string full = cmd + " >" + capture_file.string() + " 2>&1";
  const int status = std::system(full.c_str());
#ifndef _WIN32
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
#else
  return status;
#endif
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace xdecode::testing
