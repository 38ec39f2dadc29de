#include "unigan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Raster read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw LoadError("cannot open image " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw LoadError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("libpng initialisation failed for " + path.string());
  }
  Raster raster;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  raster.width = static_cast<int>(png_get_image_width(png, info));
  raster.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(raster.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("unsupported PNG layout: " + path.string());
  }
  raster.rgb.resize(static_cast<std::size_t>(raster.width) * static_cast<std::size_t>(raster.height) * 3);
  rows.resize(static_cast<std::size_t>(raster.height));
  for (int y = 0; y < raster.height; ++y) rows[static_cast<std::size_t>(y)] = &raster.at(y, 0, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raster;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  if (raster.width <= 0 || raster.height <= 0 ||
      raster.rgb.size() != static_cast<std::size_t>(raster.width) * static_cast<std::size_t>(raster.height) * 3) {
    throw ValidationError("write_png: malformed raster for " + path.string());
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot create " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(raster.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < raster.height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(raster.rgb.data() + static_cast<std::size_t>(y) * raster.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError("failed flushing " + path.string());
}

std::uint8_t denormalize_u8(Scalar v) {
  const Scalar scaled = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(scaled);
}

Tensor raster_to_tensor(const Raster& raster, int channels) {
  if (channels != 1 && channels != 3) throw ValidationError("raster_to_tensor: channels must be 1 or 3");
  Tensor t({1, channels, raster.height, raster.width});
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      if (channels == 3) {
        for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = normalize_u8(raster.at(y, x, c));
      } else {
        const Scalar mean = (static_cast<Scalar>(raster.at(y, x, 0)) + raster.at(y, x, 1) + raster.at(y, x, 2)) / 3.0;
        t.at(0, 0, y, x) = mean / 127.5 - 1.0;
      }
    }
  }
  return t;
}

Raster tensor_to_raster(const Tensor& t, std::int64_t index) {
  if (t.rank() != 4 || (t.c() != 3 && t.c() != 1)) {
    throw ShapeError("tensor_to_raster expects N x {1,3} x H x W, got " + shape_to_string(t.shape()));
  }
  Raster r;
  r.width = static_cast<int>(t.w());
  r.height = static_cast<int>(t.h());
  r.rgb.resize(static_cast<std::size_t>(r.width * r.height * 3));
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < 3; ++c) r.at(y, x, c) = denormalize_u8(t.at(index, t.c() == 3 ? c : 0, y, x));
    }
  }
  return r;
}

}  // namespace unigan
