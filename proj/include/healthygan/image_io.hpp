#pragma once

#include "healthygan/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace healthygan {

/// 8-bit image, row-major HWC, 1 or 3 channels.
struct ImageU8 {
  Index height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(Index y, Index x, Index c) {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

/// Reads an 8-bit PNG; palette and 16-bit inputs are converted, alpha is
/// dropped. Result has 1 or 3 channels.
ImageU8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

/// Bilinear resampling with the half-pixel-center convention.
ImageU8 resize_bilinear(const ImageU8& img, Index out_h, Index out_w);

/// Grayscale rendering of a scalar field: lo maps to 0, hi to 255, values
/// clamped. Used for difference-map heatmaps.
ImageU8 heatmap_image(const std::vector<double>& values, Index h, Index w, double lo, double hi);

}  // namespace healthygan
