#include "catnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace catnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Source footprint of each output sample along one axis.
struct Tap {
  int first = 0;
  std::vector<double> weights;
};

std::vector<Tap> area_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
    taps[i].first = first;
    for (int s = first; s <= last; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      taps[i].weights.push_back(overlap / scale);
    }
  }
  return taps;
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  require(file != nullptr, "cannot open raster: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("malformed raster: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth < 8) png_set_expand(png);
  png_read_update_info(png, info);
  RgbImage img(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)));
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  require(!img.empty(), "cannot write an empty raster");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  require(file != nullptr, "cannot create raster: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing raster: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<float> resize_area(const RgbImage& img, int out_w, int out_h) {
  require(img.width > 0 && img.height > 0 && out_w > 0 && out_h > 0, "resize: empty raster");
  const auto tx = area_taps(img.width, out_w);
  const auto ty = area_taps(img.height, out_h);
  // Horizontal pass into doubles, then vertical.
  std::vector<double> rows(static_cast<std::size_t>(img.height) * out_w * 3, 0.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (std::size_t k = 0; k < tx[x].weights.size(); ++k) {
        const int sx = tx[x].first + static_cast<int>(k);
        for (int c = 0; c < 3; ++c)
          rows[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] += tx[x].weights[k] * img.at(sx, y, c);
      }
    }
  }
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * 3);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < ty[y].weights.size(); ++k) {
          const int sy = ty[y].first + static_cast<int>(k);
          acc += ty[y].weights[k] * rows[(static_cast<std::size_t>(sy) * out_w + x) * 3 + c];
        }
        out[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] = static_cast<float>(acc / 255.0);
      }
    }
  }
  return out;
}

RgbImage crop_replicate(const RgbImage& img, int x0, int y0, int w, int h) {
  require(!img.empty(), "crop: empty raster");
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = std::clamp(y0 + y, 0, img.height - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(x0 + x, 0, img.width - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

PatchMat to_patches(const RgbImage& img, int input_resize, int patch_size) {
  require(input_resize % patch_size == 0, "input_resize must be a multiple of patch_size");
  const std::vector<float> px = resize_area(img, input_resize, input_resize);
  const int grid = input_resize / patch_size;
  PatchMat out(grid * grid, patch_size * patch_size * 3);
  for (int ty = 0; ty < grid; ++ty) {
    for (int tx = 0; tx < grid; ++tx) {
      const int token = ty * grid + tx;
      for (int py = 0; py < patch_size; ++py) {
        for (int pxx = 0; pxx < patch_size; ++pxx) {
          const int y = ty * patch_size + py;
          const int x = tx * patch_size + pxx;
          for (int c = 0; c < 3; ++c) {
            const float v = px[(static_cast<std::size_t>(y) * input_resize + x) * 3 + c];
            out(token, (py * patch_size + pxx) * 3 + c) = (v - 0.5f) / 0.25f;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace catnet
