#include "xdecode/tensor.hpp"

#include <bit>
#include <cassert>

namespace xdecode {

// Classic float32 -> float16 -> float32 round trip with
// round-to-nearest-even, handling subnormals, overflow to inf and NaN.
float round_to_half(float x) {
  const uint32_t bits = std::bit_cast<uint32_t>(x);
  const uint32_t sign = bits & 0x80000000u;
  uint32_t abs = bits & 0x7fffffffu;

  uint16_t half;
  if (abs >= 0x7f800000u) {
    // inf / NaN
    half = static_cast<uint16_t>((abs > 0x7f800000u) ? 0x7e00 : 0x7c00);
  } else if (abs >= 0x477ff000u) {
    // rounds past half max -> inf
    half = 0x7c00;
  } else if (abs < 0x38800000u) {
    // subnormal in half: shift mantissa with implicit bit
    if (abs < 0x33000000u) {
      half = 0;  // underflow to zero
    } else {
      const int exp = static_cast<int>(abs >> 23);
      const uint32_t mant = (abs & 0x007fffffu) | 0x00800000u;
      const int shift = 126 - exp;  // bits to drop; 14..24 here
      const uint32_t rounded = (mant + (1u << (shift - 1)) - 1u + ((mant >> shift) & 1u)) >> shift;
      half = static_cast<uint16_t>(rounded);
    }
  } else {
    const uint32_t rounded = abs + 0x00000fffu + ((abs >> 13) & 1u);
    half = static_cast<uint16_t>(((rounded - 0x38000000u) >> 13));
  }

  // expand back to float32
  const uint32_t h_exp = (half >> 10) & 0x1f;
  const uint32_t h_man = half & 0x3ff;
  uint32_t out;
  if (h_exp == 0x1f) {
    out = 0x7f800000u | (h_man << 13);
  } else if (h_exp == 0) {
    if (h_man == 0) {
      out = 0;
    } else {
      // renormalize subnormal
      int e = -1;
      uint32_t m = h_man;
      do {
        ++e;
        m <<= 1;
      } while ((m & 0x400) == 0);
      out = ((127 - 15 - e) << 23) | ((m & 0x3ff) << 13);
    }
  } else {
    out = ((h_exp + 127 - 15) << 23) | (h_man << 13);
  }
  return std::bit_cast<float>(sign | out);
}

void round_to_half(std::vector<float>& values) {
  for (float& v : values) v = round_to_half(v);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  assert(a.n == b.n && a.h == b.h && a.w == b.w);
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::memcpy(out.image(i), a.image(i), a.image_size() * sizeof(float));
    std::memcpy(out.image(i) + a.image_size(), b.image(i), b.image_size() * sizeof(float));
  }
  return out;
}

void split_channels(const Tensor& ab, int c_first, Tensor& da, Tensor& db) {
  assert(c_first < ab.c);
  da = Tensor(ab.n, c_first, ab.h, ab.w);
  db = Tensor(ab.n, ab.c - c_first, ab.h, ab.w);
  for (int i = 0; i < ab.n; ++i) {
    std::memcpy(da.image(i), ab.image(i), da.image_size() * sizeof(float));
    std::memcpy(db.image(i), ab.image(i) + da.image_size(), db.image_size() * sizeof(float));
  }
}

Tensor concat_batch(const Tensor& a, const Tensor& b) {
  assert(a.c == b.c && a.h == b.h && a.w == b.w);
  Tensor out(a.n + b.n, a.c, a.h, a.w);
  std::memcpy(out.v.data(), a.v.data(), a.size() * sizeof(float));
  std::memcpy(out.v.data() + a.size(), b.v.data(), b.size() * sizeof(float));
  return out;
}

void split_batch(const Tensor& ab, int n_first, Tensor& da, Tensor& db) {
  assert(n_first < ab.n);
  da = Tensor(n_first, ab.c, ab.h, ab.w);
  db = Tensor(ab.n - n_first, ab.c, ab.h, ab.w);
  std::memcpy(da.v.data(), ab.v.data(), da.size() * sizeof(float));
  std::memcpy(db.v.data(), ab.v.data() + da.size(), db.size() * sizeof(float));
}

Tensor pack_batch(const std::vector<ImageTensor>& images) {
  assert(!images.empty());
  const ImageTensor& first = images.front();
  Tensor out(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (size_t i = 0; i < images.size(); ++i) {
    assert(images[i].same_shape(first));
    std::memcpy(out.image(static_cast<int>(i)), images[i].data.data(),
                out.image_size() * sizeof(float));
  }
  return out;
}

Tensor pack_image(const ImageTensor& image) {
  Tensor out(1, image.channels, image.height, image.width);
  std::memcpy(out.v.data(), image.data.data(), out.size() * sizeof(float));
  return out;
}

ImageTensor unpack_image(const Tensor& batch, int index, RangeTag range) {
  assert(index >= 0 && index < batch.n);
  ImageTensor out(batch.h, batch.w, batch.c, range);
  std::memcpy(out.data.data(), batch.image(index), batch.image_size() * sizeof(float));
  return out;
}

}  // namespace xdecode
