#pragma once

#include <filesystem>
#include <vector>

namespace posecal {

// Row-major luminance raster with values in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }
};

// Binary 8-bit PGM (P5, maxval 255). Values are quantized with
// round(v * 255) on write and mapped back as k / 255 on read.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage load_pgm(const std::filesystem::path& path);

}  // namespace posecal
