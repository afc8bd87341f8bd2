#pragma once

#include <filesystem>

#include "resfeat/image.hpp"

namespace resfeat {

// 8-bit PNG and binary PPM/PGM (P6/P5). Values map to [0, 1] on load and
// are rounded to nearest on save. The format is chosen from the extension.

ImageRGB load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const ImageRGB& img);
void save_image(const std::filesystem::path& path, const ImageGray& img);

/// True for extensions this module can read (.png, .ppm, .pgm; case-insensitive).
bool is_image_file(const std::filesystem::path& path);

}  // namespace resfeat
