#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "unigan/tensor.hpp"

namespace unigan {

// Interleaved 8-bit RGB raster, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // width * height * 3

  std::uint8_t& at(int y, int x, int c) { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
};

// Reads any 8/16-bit PNG, converting to 8-bit RGB. Throws LoadError.
Raster read_png(const std::filesystem::path& path);
// Writes an 8-bit RGB PNG with fixed settings, so equal rasters give equal bytes.
void write_png(const std::filesystem::path& path, const Raster& raster);

// 0 -> -1, 255 -> 1. Result is 1 x channels x H x W; channels 1 averages RGB.
Tensor raster_to_tensor(const Raster& raster, int channels = 3);
// Inverse of raster_to_tensor for sample `index` of an NCHW tensor (1 or 3 channels).
Raster tensor_to_raster(const Tensor& t, std::int64_t index = 0);

inline Scalar normalize_u8(std::uint8_t v) { return static_cast<Scalar>(v) / 127.5 - 1.0; }
std::uint8_t denormalize_u8(Scalar v);

}  // namespace unigan
