#pragma once

#include <cstddef>
#include <vector>

#include "xdecode/error.hpp"

namespace xdecode {

// Declared value range of an image. All internal math is float32; 8-bit
// only exists at the file I/O boundary.
enum class RangeTag {
  unit,    // [0, 1]
  signed_  // [-1, 1]
};

constexpr int kMinBlurLevel = 3;
constexpr int kMaxBlurLevel = 29;

// Odd box-blur kernel side length in [3, 29].
struct BlurLevel {
  int value = kMinBlurLevel;

  static BlurLevel checked(int v) {
    if (v < kMinBlurLevel || v > kMaxBlurLevel || v % 2 == 0) {
      throw Error(Errc::invalid_blur_level,
                  "blur level must be an odd integer in [3, 29], got " + std::to_string(v));
    }
    return BlurLevel{v};
  }

  friend bool operator==(BlurLevel a, BlurLevel b) { return a.value == b.value; }
  friend auto operator<=>(BlurLevel a, BlurLevel b) { return a.value <=> b.value; }
};

// H x W x C float image, stored planar (channel-major: [c][y][x]).
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  RangeTag range = RangeTag::unit;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, RangeTag r = RangeTag::unit, float fill = 0.f)
      : height(h), width(w), channels(c), range(r),
        data(static_cast<size_t>(h) * w * c, fill) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  size_t size() const { return data.size(); }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  float range_lo() const { return range == RangeTag::unit ? 0.f : -1.f; }
  float range_hi() const { return 1.f; }
};

// Range conversions: unit [0,1] <-> signed [-1,1].
ImageTensor to_signed(const ImageTensor& img);
ImageTensor to_unit(const ImageTensor& img);

}  // namespace xdecode
