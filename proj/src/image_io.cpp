#include "healthygan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace healthygan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("png: cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw std::runtime_error("png: not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: decode error in " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: unsupported channel count in " + path);
  }

  ImageU8 img;
  img.height = static_cast<Index>(h);
  img.width = static_cast<Index>(w);
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(h) * w * static_cast<size_t>(channels));

  std::vector<png_bytep> rows(h);
  const size_t stride = static_cast<size_t>(w) * static_cast<size_t>(channels);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("png: image must have 1 or 3 channels");
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("png: empty image");
  if (img.pixels.size() != static_cast<size_t>(img.height * img.width * img.channels))
    throw std::invalid_argument("png: pixel buffer does not match dimensions");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("png: cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: encode error for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  const size_t stride = static_cast<size_t>(img.width) * static_cast<size_t>(img.channels);
  for (Index y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.pixels.data()) + static_cast<size_t>(y) * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 resize_bilinear(const ImageU8& img, Index out_h, Index out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: target must be positive");
  if (img.height == out_h && img.width == out_w) return img;

  ImageU8 out;
  out.height = out_h;
  out.width = out_w;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(out_h * out_w * img.channels));

  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (Index y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (Index x = 0; x < out_w; ++x) {
      const double fx =
          std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (Index c = 0; c < img.channels; ++c) {
        const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        const double v = (1.0 - wy) * top + wy * bot;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

ImageU8 heatmap_image(const std::vector<double>& values, Index h, Index w, double lo, double hi) {
  if (static_cast<Index>(values.size()) != h * w)
    throw std::invalid_argument("heatmap: value count does not match dimensions");
  if (!(hi > lo)) throw std::invalid_argument("heatmap: need hi > lo");
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(h * w));
  const double scale = 255.0 / (hi - lo);
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp((values[i] - lo) * scale, 0.0, 255.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return img;
}

}  // namespace healthygan
