#include "xdecode/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace xdecode {

ImageTensor to_signed(const ImageTensor& img) {
  if (img.range == RangeTag::signed_) return img;
  ImageTensor out = img;
  out.range = RangeTag::signed_;
  for (float& v : out.data) v = 2.f * v - 1.f;
  return out;
}

ImageTensor to_unit(const ImageTensor& img) {
  if (img.range == RangeTag::unit) return img;
  ImageTensor out = img;
  out.range = RangeTag::unit;
  for (float& v : out.data) v = std::clamp(0.5f * (v + 1.f), 0.f, 1.f);
  return out;
}

// Each pass sums k taps per output pixel in double. k <= 29, so the
// straightforward O(H*W*k) loop beats a sliding window on accuracy and
// is still cheap.
static void mean_pass_h(const float* src, float* dst, int h, int w, int k) {
  const int r = k / 2;
  const double inv = 1.0 / k;
  for (int y = 0; y < h; ++y) {
    const float* row = src + static_cast<size_t>(y) * w;
    float* out = dst + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = -r; t <= r; ++t) s += row[reflect101(x + t, w)];
      out[x] = static_cast<float>(s * inv);
    }
  }
}

static void mean_pass_v(const float* src, float* dst, int h, int w, int k) {
  const int r = k / 2;
  const double inv = 1.0 / k;
  for (int y = 0; y < h; ++y) {
    float* out = dst + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int t = -r; t <= r; ++t)
        s += src[static_cast<size_t>(reflect101(y + t, h)) * w + x];
      out[x] = static_cast<float>(s * inv);
    }
  }
}

ImageTensor box_blur(const ImageTensor& img, BlurLevel k) {
  if (k.value >= std::min(img.height, img.width)) {
    throw Error(Errc::unsupported_kernel,
                "kernel " + std::to_string(k.value) + " too large for " +
                    std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
  ImageTensor out(img.height, img.width, img.channels, img.range);
  std::vector<float> tmp(static_cast<size_t>(img.height) * img.width);
  const size_t plane = tmp.size();
  for (int c = 0; c < img.channels; ++c) {
    const float* src = img.data.data() + c * plane;
    float* dst = out.data.data() + c * plane;
    mean_pass_h(src, tmp.data(), img.height, img.width, k.value);
    mean_pass_v(tmp.data(), dst, img.height, img.width, k.value);
  }
  return out;
}

ImageTensor box_blur(const ImageTensor& img, int k) {
  return box_blur(img, BlurLevel::checked(k));
}

ImageTensor center_crop(const ImageTensor& img, int size) {
  if (size <= 0 || size > std::min(img.height, img.width)) {
    throw Error(Errc::crop_too_large,
                "crop " + std::to_string(size) + " exceeds image " +
                    std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  const int top = (img.height - size) / 2;
  const int left = (img.width - size) / 2;
  ImageTensor out(size, size, img.channels, img.range);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out.at(c, y, x) = img.at(c, top + y, left + x);
  return out;
}

ImageTensor reflect_pad_to(const ImageTensor& img, int min_h, int min_w) {
  const int out_h = std::max(img.height, min_h);
  const int out_w = std::max(img.width, min_w);
  if (out_h == img.height && out_w == img.width) return img;
  const int top = (out_h - img.height) / 2;
  const int left = (out_w - img.width) / 2;
  ImageTensor out(out_h, out_w, img.channels, img.range);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x)
        out.at(c, y, x) = img.at(c, reflect101(y - top, img.height),
                                 reflect101(x - left, img.width));
  return out;
}

ImageTensor resize(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw Error(Errc::invalid_resize, "resize target must be >= 1");
  }
  if (out_h == img.height && out_w == img.width) return img;

  ImageTensor out(out_h, out_w, img.channels, img.range);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  const float lo = img.range_lo();

  for (int y = 0; y < out_h; ++y) {
    // half-pixel center mapping
    const double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int y1 = std::clamp(y0 + 1, 0, img.height - 1);
    y0 = std::clamp(y0, 0, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int x1 = std::clamp(x0 + 1, 0, img.width - 1);
      x0 = std::clamp(x0, 0, img.width - 1);
      for (int c = 0; c < img.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1)) +
                         wy * ((1 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1));
        out.at(c, y, x) = std::clamp(static_cast<float>(v), lo, 1.f);
      }
    }
  }
  return out;
}

}  // namespace xdecode
