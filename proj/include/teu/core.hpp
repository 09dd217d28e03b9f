#pragma once

// Common value types and vector helpers shared by every module.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace teu {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Thrown when array shapes do not line up.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine meets non-finite values or an indefinite
/// operator.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown for invalid user-facing configuration. `key` names the offending
/// entry (e.g. "unroll.algorithm").
struct ConfigError : std::invalid_argument {
  ConfigError(std::string key_path, const std::string& what)
      : std::invalid_argument(key_path + ": " + what), key(std::move(key_path)) {}
  std::string key;
};

/// Row-major 2-D complex image.
struct ComplexImage {
  std::size_t height = 0;
  std::size_t width = 0;
  CVec data;

  ComplexImage() = default;
  ComplexImage(std::size_t h, std::size_t w) : height(h), width(w), data(h * w) {}
  ComplexImage(std::size_t h, std::size_t w, CVec values)
      : height(h), width(w), data(std::move(values)) {
    if (data.size() != h * w) throw DimensionError("ComplexImage: data size does not match h*w");
  }

  std::size_t size() const { return data.size(); }
  cplx& operator()(std::size_t r, std::size_t c) { return data[r * width + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data[r * width + c]; }
};

/// Multi-coil frequency-domain samples, indexed (coil, row, column).
struct KSpaceData {
  std::size_t coils = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  CVec data;

  KSpaceData() = default;
  KSpaceData(std::size_t c, std::size_t r, std::size_t w) : coils(c), rows(r), cols(w), data(c * r * w) {}

  std::size_t plane() const { return rows * cols; }
  std::span<cplx> coil(std::size_t c) { return {data.data() + c * plane(), plane()}; }
  std::span<const cplx> coil(std::size_t c) const { return {data.data() + c * plane(), plane()}; }
};

// Inner products are conjugate-linear in the first argument.
inline cplx cdot(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw DimensionError("cdot: length mismatch");
  cplx s{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

inline double norm_sq(std::span<const cplx> a) {
  double s = 0.0;
  for (const auto& v : a) s += std::norm(v);
  return s;
}

inline double norm2(std::span<const cplx> a) { return std::sqrt(norm_sq(a)); }

inline bool all_finite(std::span<const cplx> a) {
  for (const auto& v : a)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

inline CVec axpby(double a, std::span<const cplx> x, double b, std::span<const cplx> y) {
  if (x.size() != y.size()) throw DimensionError("axpby: length mismatch");
  CVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

inline CVec sub(std::span<const cplx> x, std::span<const cplx> y) {
  if (x.size() != y.size()) throw DimensionError("sub: length mismatch");
  CVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return out;
}

inline CVec scaled(std::span<const cplx> x, double a) {
  CVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i];
  return out;
}

/// ‖a − b‖² / ‖b‖².
inline double relative_error_sq(std::span<const cplx> a, std::span<const cplx> b) {
  const double den = norm_sq(b);
  return norm_sq(sub(a, b)) / den;
}

inline double relative_error(std::span<const cplx> a, std::span<const cplx> b) {
  return std::sqrt(relative_error_sq(a, b));
}

}  // namespace teu
