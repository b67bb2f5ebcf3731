#pragma once

#include "catnet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace catnet {

/// 8-bit RGB raster, row-major, interleaved channels.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool empty() const { return pixels.empty(); }

  bool operator==(const RgbImage&) const = default;
};

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Box-filter (area) resampling to out_w x out_h; values in [0, 1], HWC order.
std::vector<float> resize_area(const RgbImage& image, int out_w, int out_h);

/// Crop of [x0, x0+w) x [y0, y0+h); pixels outside the raster replicate the nearest edge.
RgbImage crop_replicate(const RgbImage& image, int x0, int y0, int w, int h);

/// Resizes to input_resize^2, normalizes to (v - 0.5) / 0.25 and flattens each
/// patch as (row, col, channel). Result: (tokens x patch^2*3).
PatchMat to_patches(const RgbImage& image, int input_resize, int patch_size);

}  // namespace catnet
