#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "xdecode/image.hpp"

namespace xdecode {

// Dense NCHW float tensor used by the network layers.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.f) {}

  size_t size() const { return v.size(); }
  size_t plane() const { return static_cast<size_t>(h) * w; }
  size_t image_size() const { return static_cast<size_t>(c) * h * w; }

  float* image(int i) { return v.data() + i * image_size(); }
  const float* image(int i) const { return v.data() + i * image_size(); }

  float& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  float at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void zero() { std::memset(v.data(), 0, v.size() * sizeof(float)); }
};

// Round a float through IEEE binary16 (round-to-nearest-even) and back.
// Used to emulate mixed-precision compute on the CPU.
float round_to_half(float x);
void round_to_half(std::vector<float>& values);

// Channel concatenation along dim 1 and its inverse.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& ab, int c_first, Tensor& da, Tensor& db);

// Batch concatenation along dim 0 and its inverse. Instance-normalized
// nets score a stacked batch exactly as they would the two halves.
Tensor concat_batch(const Tensor& a, const Tensor& b);
void split_batch(const Tensor& ab, int n_first, Tensor& da, Tensor& db);

// ImageTensor <-> batch packing. Both sides are planar CHW, so these
// are plain copies; images in a batch must share one shape.
Tensor pack_batch(const std::vector<ImageTensor>& images);
Tensor pack_image(const ImageTensor& image);
ImageTensor unpack_image(const Tensor& batch, int index, RangeTag range);

}  // namespace xdecode
