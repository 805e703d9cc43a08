#include "cg3d/io/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cg3d/errors.hpp"
#include "cg3d/io/files.hpp"

namespace cg3d::io {

std::string encode_png(const Image& image) {
  if (image.width <= 0 || image.height <= 0) throw ShapeError("cannot encode an empty image");
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(image.rgb.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<unsigned char>(std::lround(std::clamp(image.rgb[i], 0.0, 1.0) * 255.0));
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw IoError(std::string("png encode failed: ") + desc.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw IoError(std::string("png encode failed: ") + desc.message);
  out.resize(size);
  return out;
}

Image decode_png(const std::string& bytes) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    throw IoError(std::string("png decode failed: ") + desc.message);
  desc.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw IoError(std::string("png decode failed: ") + desc.message);
  }
  Image img(static_cast<int>(desc.width), static_cast<int>(desc.height));
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = pixels[i] / 255.0;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) { write_file_atomic(path, encode_png(image)); }

Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

}  // namespace cg3d::io
