#include "xdecode/image_io.hpp"

#include <algorithm>
#include <cctype>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace xdecode {

namespace fs = std::filesystem;

static std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool has_image_extension(const fs::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageTensor load_image(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(Errc::unreadable_file, "cannot read " + path.string());
  }
  if (!has_image_extension(path)) {
    throw Error(Errc::unsupported_format, "unsupported image format: " + path.string());
  }
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) {
    throw Error(Errc::unreadable_file, "cannot decode " + path.string());
  }
  if (mat.depth() != CV_8U) {
    mat.convertTo(mat, CV_8U, mat.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  }
  const int cin = mat.channels();
  if (cin != 1 && cin != 3 && cin != 4) {
    throw Error(Errc::unsupported_format,
                std::to_string(cin) + "-channel image: " + path.string());
  }

  const int h = mat.rows, w = mat.cols;
  const int c = cin == 1 ? 1 : 3;  // alpha dropped
  ImageTensor img(h, w, c, RangeTag::unit);
  constexpr float kInv = 1.f / 255.f;
  for (int y = 0; y < h; ++y) {
    const uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      if (c == 1) {
        img.at(0, y, x) = row[x] * kInv;
      } else {
        // OpenCV stores BGR; planes are RGB
        img.at(0, y, x) = row[cin * x + 2] * kInv;
        img.at(1, y, x) = row[cin * x + 1] * kInv;
        img.at(2, y, x) = row[cin * x + 0] * kInv;
      }
    }
  }
  return img;
}

void save_image(const ImageTensor& img, const fs::path& path) {
  if (!has_image_extension(path)) {
    throw Error(Errc::unsupported_format, "unsupported image format: " + path.string());
  }
  const int h = img.height, w = img.width, c = img.channels;
  cv::Mat mat(h, w, c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < h; ++y) {
    uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      auto quantize = [&](float v) -> uint8_t {
        if (img.range == RangeTag::signed_) v = 0.5f * (v + 1.f);
        return static_cast<uint8_t>(std::clamp(std::lround(v * 255.f), 0L, 255L));
      };
      if (c == 1) {
        row[x] = quantize(img.at(0, y, x));
      } else {
        row[3 * x + 2] = quantize(img.at(0, y, x));
        row[3 * x + 1] = quantize(img.at(1, y, x));
        row[3 * x + 0] = quantize(img.at(2, y, x));
      }
    }
  }
  if (!cv::imwrite(path.string(), mat)) {
    throw Error(Errc::write_failed, "cannot write " + path.string());
  }
}

}  // namespace xdecode
