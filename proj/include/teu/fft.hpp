#pragma once

// Centered, unitary 2-D FFT backed by FFTW.
//
// The DC sample sits at index (rows/2, cols/2) in k-space and the transform is
// scaled by 1/sqrt(rows*cols) in both directions, so forward and inverse are
// exact adjoints of each other.

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "teu/core.hpp"

namespace teu::fft {

enum class Direction { forward, inverse };

namespace detail {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int rows, int cols, Direction dir) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(rows, cols, dir == Direction::forward);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cplx> buf(static_cast<std::size_t>(rows) * cols);
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan = fftw_plan_dft_2d(rows, cols, p, p, dir == Direction::forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mutex_;
  std::map<std::tuple<int, int, bool>, fftw_plan> plans_;
};

// out[k] = in[(k + offset) mod n] along both axes.
inline void roll2d(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols,
                   std::size_t row_offset, std::size_t col_offset) {
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t src_r = (r + row_offset) % rows;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[src_r * cols + (c + col_offset) % cols];
  }
}

}  // namespace detail

/// fftshift: moves the zero-frequency sample to the array centre.
inline void fftshift(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols) {
  detail::roll2d(in, out, rows, cols, rows - rows / 2, cols - cols / 2);
}

inline void ifftshift(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols) {
  detail::roll2d(in, out, rows, cols, rows / 2, cols / 2);
}

/// In-place centered unitary 2-D transform of a row-major rows x cols plane.
inline void fft2c(std::span<cplx> data, std::size_t rows, std::size_t cols, Direction dir) {
  if (data.size() != rows * cols) throw DimensionError("fft2c: data size does not match rows*cols");
  std::vector<cplx> tmp(data.size());
  ifftshift(data, tmp, rows, cols);
  fftw_plan plan = detail::PlanCache::instance().get(static_cast<int>(rows), static_cast<int>(cols), dir);
  auto* p = reinterpret_cast<fftw_complex*>(tmp.data());
  fftw_execute_dft(plan, p, p);
  fftshift(tmp, data, rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows * cols));
  for (auto& v : data) v *= scale;
}

}  // namespace teu::fft
