#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xdecode/datapipe.hpp"
#include "xdecode/image.hpp"

namespace xdecode {

// SSIM parameters: the standard 11x11 Gaussian window with sigma 1.5
// and the usual stability constants C1=(k1*peak)^2, C2=(k2*peak)^2.
struct GaussianWindowSpec {
  int size = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

// 10*log10(peak^2 / MSE) in dB; +inf when the images are identical.
double psnr(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

// Mean local SSIM over valid window positions, computed per channel
// and averaged. Inputs must be unit range and at least window sized.
double ssim(const ImageTensor& a, const ImageTensor& b,
            const GaussianWindowSpec& window = {});

struct EvalRow {
  std::string blur_level;  // decimal level or "all"
  double ssim = 0.0;
  double psnr = 0.0;  // +inf allowed, serialized as "inf"
  int n_images = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // ascending blur level, then "all"
  std::string checkpoint_id;
  std::string dataset_id;
};

// Restoration under test: unit-range blurred image in, unit-range
// restored image out. Wrapping the model this way keeps evaluation
// testable with identity and ground-truth stand-ins.
using ModelFn = std::function<ImageTensor(const ImageTensor&)>;

// Scores `model` over every manifest pair and aggregates per blur
// level plus an overall row. Per-image PSNR can be +inf; a group mean
// ignores inf entries unless the whole group is inf.
EvalReport evaluate(const ModelFn& model, const TestsetManifest& manifest);

// Report CSV with header `blur_level,ssim,psnr,n_images`.
void write_eval_report(const EvalReport& report, const std::filesystem::path& csv_path);
EvalReport read_eval_report(const std::filesystem::path& csv_path);

// Plain-text table for terminal output.
std::string format_eval_table(const EvalReport& report);

}  // namespace xdecode
