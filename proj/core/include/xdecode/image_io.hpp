#pragma once

#include <filesystem>

#include "xdecode/image.hpp"

namespace xdecode {

// PNG/JPEG file I/O. Images are 8-bit on disk and float in memory;
// loaded images carry RangeTag::unit.

// Throws unreadable-file / unsupported-format.
ImageTensor load_image(const std::filesystem::path& path);

// Writes PNG or JPEG depending on the extension. The declared range is
// mapped to [0, 255] before quantization. Throws write-failed.
void save_image(const ImageTensor& img, const std::filesystem::path& path);

bool has_image_extension(const std::filesystem::path& path);

}  // namespace xdecode
