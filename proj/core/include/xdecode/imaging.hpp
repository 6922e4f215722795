#pragma once

#include "xdecode/image.hpp"

namespace xdecode {

// Uniform k x k box blur with reflect-101 border padding, run as two
// separable 1-D mean passes. Shape and range tag are preserved.
//
// Throws invalid-blur-level for even or out-of-range k and
// unsupported-kernel when k >= min(H, W).
ImageTensor box_blur(const ImageTensor& img, BlurLevel k);
ImageTensor box_blur(const ImageTensor& img, int k);

// Centered size x size crop. Odd margins drop the extra row/column from
// the bottom/right. Throws crop-too-large when size > min(H, W).
ImageTensor center_crop(const ImageTensor& img, int size);

// Reflect-101 pad (centered) until the image is at least min_h x min_w.
// Used as the fallback before cropping images smaller than the crop size.
ImageTensor reflect_pad_to(const ImageTensor& img, int min_h, int min_w);

// Bilinear resize, half-pixel centers (aligned corners disabled). Output
// is clamped to the declared range.
ImageTensor resize(const ImageTensor& img, int out_h, int out_w);

// reflect-101 index: gfedcb|abcdefgh|gfedcba
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace xdecode
