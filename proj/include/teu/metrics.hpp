#pragma once

// PSNR, SSIM and NMSE. Complex images are compared through their magnitudes
// with the dynamic range taken from the reference.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "teu/core.hpp"

namespace teu::metrics {

struct MetricReport {
  double psnr_db = 0.0;  // +inf when the images are identical
  double ssim = 0.0;
  double nmse = 0.0;
};

inline std::vector<double> magnitude(const ComplexImage& img) {
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(img.data[i]);
  return out;
}

inline ComplexImage center_crop(const ComplexImage& img, std::size_t h, std::size_t w) {
  if (h > img.height || w > img.width) throw DimensionError("center_crop: crop larger than image");
  ComplexImage out(h, w);
  const std::size_t r0 = (img.height - h) / 2, c0 = (img.width - w) / 2;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = img(r0 + r, c0 + c);
  return out;
}

inline double psnr(std::span<const double> reference, std::span<const double> test,
                   std::optional<double> data_max = std::nullopt) {
  if (reference.size() != test.size() || reference.empty()) throw DimensionError("psnr: shape mismatch");
  double peak = 0.0;
  if (data_max) {
    peak = *data_max;
  } else {
    for (double v : reference) peak = std::max(peak, std::abs(v));
  }
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: data_max must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) mse += (reference[i] - test[i]) * (reference[i] - test[i]);
  mse /= static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

inline double psnr(const ComplexImage& reference, const ComplexImage& test, std::optional<double> data_max = std::nullopt) {
  if (reference.height != test.height || reference.width != test.width) throw DimensionError("psnr: shape mismatch");
  return psnr(magnitude(reference), magnitude(test), data_max);
}

struct SsimOptions {
  double k1 = 0.01;
  double k2 = 0.03;
  int window = 11;
  double sigma = 1.5;
};

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    s += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= s;
  return g;
}

/// Mean single-scale SSIM over all valid (unpadded) window positions.
inline double ssim(std::span<const double> reference, std::span<const double> test, std::size_t height,
                   std::size_t width, std::optional<double> data_range = std::nullopt, const SsimOptions& opt = {}) {
  if (reference.size() != test.size() || reference.size() != height * width) throw DimensionError("ssim: shape mismatch");
  const auto win = static_cast<std::size_t>(opt.window);
  if (height < win || width < win) throw DimensionError("ssim: image smaller than the window");
  double L = 0.0;
  if (data_range) {
    L = *data_range;
  } else {
    const auto [lo, hi] = std::minmax_element(reference.begin(), reference.end());
    L = *hi - *lo;
    if (L == 0.0) L = std::max(std::abs(*hi), 1.0);
  }
  const double C1 = (opt.k1 * L) * (opt.k1 * L);
  const double C2 = (opt.k2 * L) * (opt.k2 * L);
  const auto g = gaussian_taps(opt.window, opt.sigma);

  // Separable filtering of x, y, x^2, y^2, xy: rows first, then columns.
  const std::size_t oh = height - win + 1, ow = width - win + 1;
  std::vector<double> sources[5];
  for (auto& s : sources) s.resize(height * width);
  for (std::size_t i = 0; i < height * width; ++i) {
    const double x = reference[i], y = test[i];
    sources[0][i] = x;
    sources[1][i] = y;
    sources[2][i] = x * x;
    sources[3][i] = y * y;
    sources[4][i] = x * y;
  }
  std::vector<double> filtered[5];
  for (int k = 0; k < 5; ++k) {
    std::vector<double> rowpass(height * ow, 0.0);
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < win; ++j) acc += g[j] * sources[k][r * width + c + j];
        rowpass[r * ow + c] = acc;
      }
    filtered[k].assign(oh * ow, 0.0);
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < win; ++i) acc += g[i] * rowpass[(r + i) * ow + c];
        filtered[k][r * ow + c] = acc;
      }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < oh * ow; ++i) {
    const double mx = filtered[0][i], my = filtered[1][i];
    const double vx = filtered[2][i] - mx * mx;
    const double vy = filtered[3][i] - my * my;
    const double cxy = filtered[4][i] - mx * my;
    total += ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
  }
  return total / static_cast<double>(oh * ow);
}

inline double ssim(const ComplexImage& reference, const ComplexImage& test, std::optional<double> data_range = std::nullopt,
                   const SsimOptions& opt = {}) {
  if (reference.height != test.height || reference.width != test.width) throw DimensionError("ssim: shape mismatch");
  return ssim(magnitude(reference), magnitude(test), reference.height, reference.width, data_range, opt);
}

inline double nmse(std::span<const cplx> reference, std::span<const cplx> test) {
  if (reference.size() != test.size()) throw DimensionError("nmse: shape mismatch");
  const double den = norm_sq(reference);
  if (den == 0.0) throw std::invalid_argument("nmse: reference has zero norm");
  double num = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) num += std::norm(test[i] - reference[i]);
  return num / den;
}

inline double nmse(const ComplexImage& reference, const ComplexImage& test) {
  if (reference.height != test.height || reference.width != test.width) throw DimensionError("nmse: shape mismatch");
  return nmse(std::span<const cplx>(reference.data), std::span<const cplx>(test.data));
}

inline MetricReport evaluate(const ComplexImage& reference, const ComplexImage& test) {
  return {psnr(reference, test), ssim(reference, test), nmse(reference, test)};
}

}  // namespace teu::metrics
