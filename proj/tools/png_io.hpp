#pragma once

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "teu/core.hpp"

namespace teu::cli {

/// 8-bit greyscale magnitude image, scaled by `window` (default: image max).
inline void write_magnitude_png(const std::filesystem::path& path, const ComplexImage& img,
                                std::optional<double> window = std::nullopt) {
  double peak = 0.0;
  if (window) {
    peak = *window;
  } else {
    for (const auto& v : img.data) peak = std::max(peak, std::abs(v));
  }
  std::vector<png_byte> pixels(img.size(), 0);
  if (peak > 0.0)
    for (std::size_t i = 0; i < img.size(); ++i)
      pixels[i] = static_cast<png_byte>(std::clamp(std::abs(img.data[i]) / peak, 0.0, 1.0) * 255.0 + 0.5);

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < img.height; ++r) png_write_row(png, pixels.data() + r * img.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace teu::cli
