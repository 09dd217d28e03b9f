#pragma once

// Multi-coil Cartesian forward model y = E x + n: sampling masks, coil
// sensitivities, the encoding operator, phantoms and measurement noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "teu/core.hpp"
#include "teu/fft.hpp"

namespace teu {

/// Column (phase-encode) undersampling pattern. Rows are always fully sampled.
struct SamplingMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pattern;  // row-major, 1 = sampled
  double acceleration = 1.0;
  std::size_t acs_lines = 0;

  bool sampled(std::size_t r, std::size_t c) const { return pattern[r * cols + c] != 0; }
  bool column_sampled(std::size_t c) const { return sampled(0, c); }

  std::vector<std::size_t> sampled_columns() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < cols; ++c)
      if (column_sampled(c)) out.push_back(c);
    return out;
  }

  std::size_t count() const { return static_cast<std::size_t>(std::count(pattern.begin(), pattern.end(), 1)); }

  static SamplingMask full(std::size_t rows, std::size_t cols) {
    SamplingMask m;
    m.rows = rows;
    m.cols = cols;
    m.pattern.assign(rows * cols, 1);
    return m;
  }
};

/// First column of the centred ACS block. With an odd number of leftover
/// columns the block sits one column to the right.
inline std::size_t acs_start(std::size_t cols, std::size_t acs) { return (cols - acs + 1) / 2; }

namespace detail {
inline SamplingMask mask_from_columns(std::size_t rows, std::size_t cols, const std::set<std::size_t>& columns,
                                      double R, std::size_t acs) {
  SamplingMask m;
  m.rows = rows;
  m.cols = cols;
  m.acceleration = R;
  m.acs_lines = acs;
  m.pattern.assign(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (auto c : columns) m.pattern[r * cols + c] = 1;
  return m;
}
}  // namespace detail

/// Columns {0, R, 2R, ...} plus `acs` centred columns.
inline SamplingMask make_equispaced_mask(std::size_t rows, std::size_t cols, int R, std::size_t acs) {
  if (R < 1) throw std::invalid_argument("make_equispaced_mask: R must be >= 1");
  if (acs > cols) throw std::invalid_argument("make_equispaced_mask: acs exceeds column count");
  if (rows == 0 || cols == 0) throw DimensionError("make_equispaced_mask: empty mask");
  std::set<std::size_t> columns;
  for (std::size_t c = 0; c < cols; c += static_cast<std::size_t>(R)) columns.insert(c);
  const std::size_t start = acs_start(cols, acs);
  for (std::size_t c = start; c < start + acs; ++c) columns.insert(c);
  return detail::mask_from_columns(rows, cols, columns, R, acs);
}

/// ACS block plus uniformly drawn columns, round(cols/R) columns in total.
inline SamplingMask make_random_mask(std::size_t rows, std::size_t cols, double R, std::size_t acs,
                                     std::uint64_t seed) {
  if (R < 1.0) throw std::invalid_argument("make_random_mask: R must be >= 1");
  if (acs > cols) throw std::invalid_argument("make_random_mask: acs exceeds column count");
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(cols) / R));
  if (budget < acs) throw std::invalid_argument("make_random_mask: cols/R is smaller than the ACS block");
  std::set<std::size_t> columns;
  const std::size_t start = acs_start(cols, acs);
  for (std::size_t c = start; c < start + acs; ++c) columns.insert(c);
  std::vector<std::size_t> candidates;
  for (std::size_t c = 0; c < cols; ++c)
    if (!columns.contains(c)) candidates.push_back(c);
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  for (std::size_t i = 0; i < budget - acs && i < candidates.size(); ++i) columns.insert(candidates[i]);
  return detail::mask_from_columns(rows, cols, columns, R, acs);
}

struct CoilSensitivities {
  std::size_t coils = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  CVec maps;  // (coil, row, column)

  std::size_t plane() const { return rows * cols; }
  std::span<const cplx> coil(std::size_t c) const { return {maps.data() + c * plane(), plane()}; }

  static CoilSensitivities uniform(std::size_t rows, std::size_t cols) {
    return {1, rows, cols, CVec(rows * cols, cplx{1.0, 0.0})};
  }
};

/// E = mask . F . S with F the centred unitary FFT and S the coil maps.
class EncodingOperator {
 public:
  EncodingOperator(SamplingMask mask, CoilSensitivities sens) : mask_(std::move(mask)), sens_(std::move(sens)) {
    if (mask_.rows != sens_.rows || mask_.cols != sens_.cols)
      throw DimensionError("EncodingOperator: mask and sensitivity shapes differ");
    if (sens_.coils == 0) throw DimensionError("EncodingOperator: no coils");
    if (sens_.maps.size() != sens_.coils * sens_.plane())
      throw DimensionError("EncodingOperator: sensitivity buffer size mismatch");
  }

  const SamplingMask& mask() const { return mask_; }
  const CoilSensitivities& sens() const { return sens_; }
  std::size_t rows() const { return sens_.rows; }
  std::size_t cols() const { return sens_.cols; }
  std::size_t coils() const { return sens_.coils; }
  std::size_t image_size() const { return sens_.plane(); }
  std::size_t kspace_size() const { return sens_.coils * sens_.plane(); }

  KSpaceData forward(const ComplexImage& x) const {
    if (x.height != rows() || x.width != cols()) throw DimensionError("forward: image shape does not match operator");
    return forward(std::span<const cplx>(x.data));
  }

  KSpaceData forward(std::span<const cplx> x) const {
    if (x.size() != image_size()) throw DimensionError("forward: image size does not match operator");
    KSpaceData y(coils(), rows(), cols());
    for (std::size_t c = 0; c < coils(); ++c) {
      auto out = y.coil(c);
      auto s = sens_.coil(c);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i] * x[i];
      fft::fft2c(out, rows(), cols(), fft::Direction::forward);
      apply_mask(out);
    }
    return y;
  }

  ComplexImage adjoint(const KSpaceData& y) const {
    if (y.coils != coils() || y.rows != rows() || y.cols != cols())
      throw DimensionError("adjoint: k-space shape does not match operator");
    return ComplexImage(rows(), cols(), adjoint(std::span<const cplx>(y.data)));
  }

  CVec adjoint(std::span<const cplx> y) const {
    if (y.size() != kspace_size()) throw DimensionError("adjoint: k-space size does not match operator");
    CVec x(image_size(), cplx{0.0, 0.0});
    CVec buf(image_size());
    for (std::size_t c = 0; c < coils(); ++c) {
      std::copy_n(y.data() + c * image_size(), image_size(), buf.begin());
      apply_mask(buf);
      fft::fft2c(buf, rows(), cols(), fft::Direction::inverse);
      auto s = sens_.coil(c);
      for (std::size_t i = 0; i < buf.size(); ++i) x[i] += std::conj(s[i]) * buf[i];
    }
    return x;
  }

  /// E^H E x without materialising k-space for all coils at once.
  CVec normal(std::span<const cplx> x) const {
    if (x.size() != image_size()) throw DimensionError("normal: image size does not match operator");
    CVec out(image_size(), cplx{0.0, 0.0});
    CVec buf(image_size());
    for (std::size_t c = 0; c < coils(); ++c) {
      auto s = sens_.coil(c);
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = s[i] * x[i];
      fft::fft2c(buf, rows(), cols(), fft::Direction::forward);
      apply_mask(buf);
      fft::fft2c(buf, rows(), cols(), fft::Direction::inverse);
      for (std::size_t i = 0; i < buf.size(); ++i) out[i] += std::conj(s[i]) * buf[i];
    }
    return out;
  }

  void apply_mask(std::span<cplx> plane) const {
    for (std::size_t i = 0; i < plane.size(); ++i)
      if (!mask_.pattern[i]) plane[i] = cplx{0.0, 0.0};
  }

 private:
  SamplingMask mask_;
  CoilSensitivities sens_;
};

/// Sum of random ellipses with intensities in [0, 1] and a smooth random
/// phase. Pixel magnitude never exceeds the sum of ellipse intensities.
inline ComplexImage make_phantom(std::size_t height, std::size_t width, int num_ellipses, std::uint64_t seed) {
  if (height < 8 || width < 8) throw DimensionError("make_phantom: dimensions must be at least 8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  struct Ellipse {
    double cy, cx, ay, ax, cos_t, sin_t, intensity;
  };
  std::vector<Ellipse> ellipses;
  for (int k = 0; k < num_ellipses; ++k) {
    const double theta = uniform(0.0, std::numbers::pi);
    ellipses.push_back({uniform(-0.5, 0.5), uniform(-0.5, 0.5), uniform(0.1, 0.6), uniform(0.1, 0.6),
                        std::cos(theta), std::sin(theta), uniform(0.0, 1.0)});
  }
  // Low-order polynomial phase, at most a couple of radians across the FOV.
  const double p0 = uniform(-std::numbers::pi, std::numbers::pi);
  const double py = uniform(-0.8, 0.8), px = uniform(-0.8, 0.8), pxy = uniform(-0.4, 0.4);

  ComplexImage img(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const double y = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(height) - 1.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double x = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(width) - 1.0;
      double mag = 0.0;
      for (const auto& e : ellipses) {
        const double dy = y - e.cy, dx = x - e.cx;
        const double u = (dx * e.cos_t + dy * e.sin_t) / e.ax;
        const double v = (-dx * e.sin_t + dy * e.cos_t) / e.ay;
        if (u * u + v * v <= 1.0) mag += e.intensity;
      }
      if (mag != 0.0) img(r, c) = std::polar(mag, p0 + py * y + px * x + pxy * x * y);
    }
  }
  return img;
}

/// Gaussian-magnitude coil profiles with linear phase, normalised so that
/// sum_c |S_c|^2 = 1 at every pixel.
inline CoilSensitivities make_smooth_sensitivities(std::size_t height, std::size_t width, std::size_t num_coils,
                                                   std::uint64_t seed) {
  if (num_coils == 0) throw std::invalid_argument("make_smooth_sensitivities: need at least one coil");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  CoilSensitivities s{num_coils, height, width, CVec(num_coils * height * width)};
  for (std::size_t k = 0; k < num_coils; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_coils) +
                         uniform(-0.2, 0.2);
    const double cy = 0.8 * std::sin(angle), cx = 0.8 * std::cos(angle);
    const double w = uniform(0.6, 1.0);
    const double phase0 = uniform(-std::numbers::pi, std::numbers::pi);
    const double gy = uniform(-1.0, 1.0), gx = uniform(-1.0, 1.0);
    for (std::size_t r = 0; r < height; ++r) {
      const double y = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(height) - 1.0;
      for (std::size_t c = 0; c < width; ++c) {
        const double x = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(width) - 1.0;
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        s.maps[k * s.plane() + r * width + c] = std::polar(std::exp(-d2 / (2.0 * w * w)), phase0 + gy * y + gx * x);
      }
    }
  }
  for (std::size_t i = 0; i < s.plane(); ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < num_coils; ++k) total += std::norm(s.maps[k * s.plane() + i]);
    const double inv = 1.0 / std::sqrt(total);
    for (std::size_t k = 0; k < num_coils; ++k) s.maps[k * s.plane() + i] *= inv;
  }
  return s;
}

/// Adds circular complex Gaussian noise (std `sigma` per real/imag part) at
/// sampled locations only.
inline KSpaceData add_noise(const KSpaceData& y, const SamplingMask& mask, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be non-negative");
  if (y.rows != mask.rows || y.cols != mask.cols) throw DimensionError("add_noise: mask shape mismatch");
  KSpaceData out = y;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (std::size_t c = 0; c < y.coils; ++c) {
    auto plane = out.coil(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (!mask.pattern[i]) continue;
      const double re = gauss(rng);
      const double im = gauss(rng);
      plane[i] += cplx{re, im};
    }
  }
  return out;
}

}  // namespace teu
