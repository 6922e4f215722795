#pragma once

// Shared helpers for the unit and acceptance suites: scratch
// directories, deterministic toy images, finite-difference gradient
// checks, and reference implementations that act as independent
// oracles for the library code (naive blur, windowed SSIM, schedule
// formulas). The oracles deliberately avoid the library's own
// shortcuts (separability, incremental sums) so agreement is evidence.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xdecode/image.hpp"
#include "xdecode/metrics.hpp"
#include "xdecode/rng.hpp"
#include "xdecode/schedule.hpp"
#include "xdecode/tensor.hpp"

namespace xdecode::testing {

// Unique scratch directory under the system temp dir, removed on
// destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

// Uniform-noise image in the tag's range.
ImageTensor random_image(Rng& rng, int h, int w, int c = 3, RangeTag range = RangeTag::unit);

// Gaussian-noise tensor.
Tensor random_tensor(Rng& rng, int n, int c, int h, int w, double stddev = 1.0);

// Piecewise-smooth test scene: gradient background plus solid
// rectangles and discs. Sharp edges give a box blur something to
// destroy, which is what the restoration tests need.
ImageTensor toy_image(Rng& rng, int size);

// Writes n toy scenes as PNGs into dir (created if needed) and
// returns the paths in filename order.
std::vector<std::filesystem::path> make_toy_corpus(const std::filesystem::path& dir, int n,
                                                   int size, uint64_t seed);

// Worst relative error between analytic gradient dx and a central
// finite difference of f, probed at n_probes random elements of x.
// Elements where both sides are ~0 count as exact.
double fd_max_rel_error(const std::function<double(const Tensor&)>& f, Tensor x,
                        const Tensor& dx, double eps, int n_probes, Rng& rng);

// Same probe loop against a raw value/grad array (layer parameters).
double fd_max_rel_error_values(const std::function<double()>& f, std::vector<float>& values,
                               const std::vector<float>& grads, double eps, int n_probes,
                               Rng& rng);

// O(k^2) double-precision box blur with reflect-101 borders. Border
// indices are folded with an explicit loop rather than the library's
// closed-form mapping.
ImageTensor box_blur_reference(const ImageTensor& img, int k);

// SSIM straight from the definition: explicit 2-D Gaussian window,
// weighted moments per window position, no separable passes.
double ssim_reference(const ImageTensor& a, const ImageTensor& b,
                      const GaussianWindowSpec& window = {});

double psnr_reference(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

// Direct-formula schedule evaluator with its own odd rounding.
int schedule_oracle(const ScheduleConfig& cfg, int t);

// Runs a command line, stdout+stderr captured to capture_file, returns
// the exit status.
int run_command(const std::string& cmd, const std::filesystem::path& capture_file);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace xdecode::testing
