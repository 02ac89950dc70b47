#pragma once

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mitoscan/io.hpp"
#include "mitoscan/raster.hpp"

// Heatmap rendering: min-max normalized values through a fixed five-stop
// ramp black -> green -> yellow -> red -> white, encoded as 8-bit RGB PNG.

namespace mitoscan {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr std::array<Rgb, 5> kHeatRamp = {{{0, 0, 0}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}, {255, 255, 255}}};

inline Rgb heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * (kHeatRamp.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), kHeatRamp.size() - 2);
  const double f = pos - static_cast<double>(i);
  Rgb out{};
  for (int ch = 0; ch < 3; ++ch) {
    const double v = kHeatRamp[i][ch] + f * (kHeatRamp[i + 1][ch] - kHeatRamp[i][ch]);
    out[ch] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

struct RenderedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
  double value_min = 0.0;
  double value_max = 0.0;
};

inline RenderedImage render_heatmap(const DensityGrid& grid) {
  RenderedImage img;
  img.width = grid.cols;
  img.height = grid.rows;
  img.rgb.resize(grid.size() * 3);
  if (grid.size() == 0) return img;
  double lo = grid.values.front(), hi = lo;
  for (float v : grid.values) {
    lo = std::min<double>(lo, v);
    hi = std::max<double>(hi, v);
  }
  img.value_min = lo;
  img.value_max = hi;
  const double span = hi - lo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = span > 0.0 ? (grid.values[i] - lo) / span : 0.0;
    const auto c = heat_color(t);
    img.rgb[3 * i] = c[0];
    img.rgb[3 * i + 1] = c[1];
    img.rgb[3 * i + 2] = c[2];
  }
  return img;
}

inline std::string encode_png(const RenderedImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.rgb.data(), 0, nullptr)) {
    fail(ErrorCode::Io, std::string("encode_png: ") + image.message);
  }
  std::string png(size, '\0');
  if (!png_image_write_to_memory(&image, png.data(), &size, 0, img.rgb.data(), 0, nullptr)) {
    fail(ErrorCode::Io, std::string("encode_png: ") + image.message);
  }
  png.resize(size);
  return png;
}

// "<stem>_range_<min>_<max>.png", recording the normalization range.
inline std::string heatmap_filename(const std::string& stem, const RenderedImage& img) {
  return stem + "_range_" + format_real(img.value_min) + "_" + format_real(img.value_max) + ".png";
}

}  // namespace mitoscan
