#include "resfeat/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <vector>

#include "resfeat/binary_io.hpp"

namespace resfeat {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageRGB load_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open image '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(stride * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageRGB img(width, height);
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) img.data[c](y, x) = rows[y][3 * x + c] / 255.0f;
    }
  }
  return img;
}

void save_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
              Index width, Index height, int channels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot write image '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failed for '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + y * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw FormatError("truncated PNM header");
  return bytes.substr(start, pos - start);
}

ImageRGB load_pnm(const std::filesystem::path& path) {
  const std::string bytes = binary::read_file(path.string());
  std::size_t pos = 0;
  const std::string magic = pnm_token(bytes, pos);
  if (magic != "P6" && magic != "P5") {
    throw FormatError("unsupported PNM type '" + magic + "' in " + path.string());
  }
  const long width = std::stol(pnm_token(bytes, pos));
  const long height = std::stol(pnm_token(bytes, pos));
  const long maxval = std::stol(pnm_token(bytes, pos));
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw FormatError("bad PNM header in " + path.string());
  }
  ++pos;  // single whitespace before raster
  const int channels = magic == "P6" ? 3 : 1;
  const int sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(width * height * channels * sample_bytes);
  if (bytes.size() < pos + need) throw FormatError("truncated PNM raster in " + path.string());
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  ImageRGB img(width, height);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const long idx = (y * width + x) * channels + (channels == 3 ? c : 0);
        const unsigned v = sample_bytes == 1 ? raster[idx]
                                             : (raster[2 * idx] << 8u) | raster[2 * idx + 1];
        img.data[c](y, x) = static_cast<float>(v) * scale;
      }
    }
  }
  return img;
}

void save_pnm(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
              Index width, Index height, int channels) {
  std::ostringstream header;
  header << (channels == 3 ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
  std::string bytes = header.str();
  bytes.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  binary::write_file(path.string(), bytes);
}

void save_pixels(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                 Index width, Index height, int channels) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    save_png(path, pixels, width, height, channels);
  } else if (ext == ".ppm" || ext == ".pgm") {
    save_pnm(path, pixels, width, height, channels);
  } else {
    throw DataError("unsupported image extension '" + ext + "'");
  }
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

ImageRGB load_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm" || ext == ".pgm") return load_pnm(path);
  throw DataError("unsupported image extension '" + ext + "' for " + path.string());
}

void save_image(const std::filesystem::path& path, const ImageRGB& img) {
  const Index w = img.width(), h = img.height();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w * h * 3));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) pixels[static_cast<std::size_t>((y * w + x) * 3 + c)] = to_byte(img.data[c](y, x));
    }
  }
  save_pixels(path, pixels, w, h, 3);
}

void save_image(const std::filesystem::path& path, const ImageGray& img) {
  const Index w = img.width(), h = img.height();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w * h));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) pixels[static_cast<std::size_t>(y * w + x)] = to_byte(img(x, y));
  }
  // PPM output of a gray image is written as RGB.
  if (lower_extension(path) == ".ppm") {
    save_image(path, to_rgb(img));
    return;
  }
  save_pixels(path, pixels, w, h, 1);
}

}  // namespace resfeat
