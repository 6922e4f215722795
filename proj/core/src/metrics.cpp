#include "xdecode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "xdecode/error.hpp"
#include "xdecode/image_io.hpp"

namespace xdecode {

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode correlation of one channel with a 1-D window
// applied along both axes. Input h x w, output (h-t+1) x (w-t+1).
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& win) {
  const int t = static_cast<int>(win.size());
  const int ow = w - t + 1;
  const int oh = h - t + 1;
  std::vector<double> horiz(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < t; ++k) acc += win[k] * img[y * w + x + k];
      horiz[y * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < t; ++k) acc += win[k] * horiz[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const ImageTensor& a, const ImageTensor& b, double peak) {
  if (!a.same_shape(b))
    throw Error(Errc::eval_failed, "psnr: shape mismatch");
  double se = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ImageTensor& a, const ImageTensor& b,
            const GaussianWindowSpec& window) {
  if (!a.same_shape(b))
    throw Error(Errc::eval_failed, "ssim: shape mismatch");
  if (a.height < window.size || a.width < window.size)
    throw Error(Errc::eval_failed,
                "ssim: image smaller than the " + std::to_string(window.size) +
                    "x" + std::to_string(window.size) + " window");

  const std::vector<double> win = gaussian_window(window.size, window.sigma);
  const double c1 = (window.k1 * window.peak) * (window.k1 * window.peak);
  const double c2 = (window.k2 * window.peak) * (window.k2 * window.peak);
  const int h = a.height, w = a.width;
  const size_t plane = static_cast<size_t>(h) * w;

  double channel_sum = 0.0;
  std::vector<double> pa(plane), pb(plane), paa(plane), pbb(plane), pab(plane);
  for (int c = 0; c < a.channels; ++c) {
    const float* ra = a.data.data() + c * plane;
    const float* rb = b.data.data() + c * plane;
    for (size_t i = 0; i < plane; ++i) {
      pa[i] = ra[i];
      pb[i] = rb[i];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const std::vector<double> mu_a = filter_valid(pa, h, w, win);
    const std::vector<double> mu_b = filter_valid(pb, h, w, win);
    const std::vector<double> m_aa = filter_valid(paa, h, w, win);
    const std::vector<double> m_bb = filter_valid(pbb, h, w, win);
    const std::vector<double> m_ab = filter_valid(pab, h, w, win);

    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = m_aa[i] - ma * ma;
      const double vb = m_bb[i] - mb * mb;
      const double cov = m_ab[i] - ma * mb;
      acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    channel_sum += acc / static_cast<double>(mu_a.size());
  }
  return channel_sum / a.channels;
}

EvalReport evaluate(const ModelFn& model, const TestsetManifest& manifest) {
  if (manifest.rows.empty())
    throw Error(Errc::eval_failed, "evaluate: empty manifest");

  struct Group {
    double ssim_sum = 0.0;
    double psnr_sum = 0.0;  // finite entries only
    int n = 0;
    int n_finite = 0;
  };
  std::map<int, Group> groups;
  Group all;

  auto accumulate = [](Group& g, double s, double p) {
    g.ssim_sum += s;
    g.n += 1;
    if (std::isfinite(p)) {
      g.psnr_sum += p;
      g.n_finite += 1;
    }
  };

  for (const ManifestRow& row : manifest.rows) {
    const ImageTensor sharp = load_image(manifest.dir / row.sharp_path);
    const ImageTensor blurred = load_image(manifest.dir / row.blurred_path);
    const ImageTensor restored = model(blurred);
    if (!restored.same_shape(sharp))
      throw Error(Errc::eval_failed, "evaluate: model changed the image shape");
    const double s = ssim(restored, sharp);
    const double p = psnr(restored, sharp);
    accumulate(groups[row.blur_level], s, p);
    accumulate(all, s, p);
  }

  auto group_psnr = [](const Group& g) {
    // All-identical groups keep the inf sentinel; otherwise average
    // the finite scores.
    if (g.n_finite == 0) return std::numeric_limits<double>::infinity();
    return g.psnr_sum / g.n_finite;
  };

  EvalReport report;
  for (const auto& [level, g] : groups) {
    EvalRow row;
    row.blur_level = std::to_string(level);
    row.ssim = g.ssim_sum / g.n;
    row.psnr = group_psnr(g);
    row.n_images = g.n;
    report.rows.push_back(std::move(row));
  }
  EvalRow total;
  total.blur_level = "all";
  total.ssim = all.ssim_sum / all.n;
  total.psnr = group_psnr(all);
  total.n_images = all.n;
  report.rows.push_back(std::move(total));
  return report;
}

namespace {

std::string psnr_to_string(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_eval_report(const EvalReport& report, const std::filesystem::path& csv_path) {
  std::ofstream os(csv_path);
  if (!os) throw Error(Errc::write_failed, "cannot write " + csv_path.string());
  os << "blur_level,ssim,psnr,n_images\n";
  for (const EvalRow& row : report.rows) {
    os.precision(17);
    os << row.blur_level << "," << row.ssim << "," << psnr_to_string(row.psnr)
       << "," << row.n_images << "\n";
  }
  if (!os.flush()) throw Error(Errc::write_failed, "cannot write " + csv_path.string());
}

EvalReport read_eval_report(const std::filesystem::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw Error(Errc::unreadable_file, "cannot read " + csv_path.string());
  std::string line;
  if (!std::getline(is, line) || line != "blur_level,ssim,psnr,n_images")
    throw Error(Errc::bad_manifest, "bad eval report header in " + csv_path.string());
  EvalReport report;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EvalRow row;
    std::string ssim_s, psnr_s, n_s;
    if (!std::getline(ls, row.blur_level, ',') || !std::getline(ls, ssim_s, ',') ||
        !std::getline(ls, psnr_s, ',') || !std::getline(ls, n_s))
      throw Error(Errc::bad_manifest, "bad eval report row: " + line);
    row.ssim = std::stod(ssim_s);
    row.psnr = (psnr_s == "inf") ? std::numeric_limits<double>::infinity()
                                 : std::stod(psnr_s);
    row.n_images = std::stoi(n_s);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_eval_table(const EvalReport& report) {
  std::ostringstream os;
  os << "blur level      ssim     psnr (dB)   images\n";
  for (const EvalRow& row : report.rows) {
    char buf[96];
    if (std::isinf(row.psnr)) {
      std::snprintf(buf, sizeof buf, "%-10s  %8.4f   %9s   %6d\n",
                    row.blur_level.c_str(), row.ssim, "inf", row.n_images);
    } else {
      std::snprintf(buf, sizeof buf, "%-10s  %8.4f   %9.3f   %6d\n",
                    row.blur_level.c_str(), row.ssim, row.psnr, row.n_images);
    }
    os << buf;
  }
  return os.str();
}

}  // namespace xdecode
