#pragma once

// KTN1 tensor files.
//
// Layout: magic "KTN1", u32 dtype, u32 ndim, ndim x u64 dims, row-major
// payload. All integers and floats are little-endian. Complex dtypes are
// interleaved (real, imag).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "teu/core.hpp"
#include "teu/signal_model.hpp"

namespace teu::ktn {

enum class DType : std::uint32_t { complex64 = 0, complex128 = 1, f32 = 2, f64 = 3 };

inline bool is_complex(DType d) { return d == DType::complex64 || d == DType::complex128; }
inline std::size_t scalar_bytes(DType d) { return (d == DType::complex64 || d == DType::f32) ? 4 : 8; }

/// In-memory tensor. `values` holds real scalars; complex dtypes store
/// interleaved pairs, so values.size() == 2 * prod(dims) for them.
struct Tensor {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  std::uint64_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  }
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}
}  // namespace detail

inline std::vector<unsigned char> encode(const Tensor& t) {
  const std::uint64_t n = t.element_count() * (is_complex(t.dtype) ? 2 : 1);
  if (n != t.values.size()) throw DimensionError("ktn::encode: value count does not match dims");
  std::vector<unsigned char> out = {0x4B, 0x54, 0x4E, 0x31};
  detail::put_le(out, static_cast<std::uint32_t>(t.dtype));
  detail::put_le(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::put_le(out, d);
  out.reserve(out.size() + n * scalar_bytes(t.dtype));
  for (double v : t.values) {
    if (scalar_bytes(t.dtype) == 4)
      detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      detail::put_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Tensor decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "KTN1", 4) != 0) throw FormatError("ktn: bad magic");
  Tensor t;
  const auto code = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (code > 3) throw FormatError("ktn: unknown dtype code " + std::to_string(code));
  t.dtype = static_cast<DType>(code);
  const auto ndim = detail::get_le<std::uint32_t>(bytes.data() + 8);
  std::size_t pos = 12;
  if (bytes.size() < pos + 8ull * ndim) throw FormatError("ktn: truncated header");
  for (std::uint32_t i = 0; i < ndim; ++i, pos += 8) t.dims.push_back(detail::get_le<std::uint64_t>(bytes.data() + pos));
  const std::uint64_t n = t.element_count() * (is_complex(t.dtype) ? 2 : 1);
  const std::size_t sb = scalar_bytes(t.dtype);
  if (bytes.size() != pos + n * sb) throw FormatError("ktn: payload size does not match header");
  t.values.resize(n);
  for (std::uint64_t i = 0; i < n; ++i, pos += sb) {
    if (sb == 4)
      t.values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes.data() + pos));
    else
      t.values[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + pos));
  }
  return t;
}

inline void write(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("ktn: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("ktn: write failed for " + path.string());
}

inline Tensor read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ktn: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

// Typed conversions.

inline Tensor from_complex(std::span<const cplx> data, std::vector<std::uint64_t> dims,
                           DType dtype = DType::complex128) {
  Tensor t{dtype, std::move(dims), {}};
  t.values.reserve(2 * data.size());
  for (const auto& v : data) {
    t.values.push_back(v.real());
    t.values.push_back(v.imag());
  }
  if (t.element_count() != data.size()) throw DimensionError("ktn: dims do not match data");
  return t;
}

inline CVec to_complex(const Tensor& t) {
  if (!is_complex(t.dtype)) throw FormatError("ktn: expected a complex tensor");
  CVec out(t.values.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t.values[2 * i], t.values[2 * i + 1]};
  return out;
}

inline Tensor from_image(const ComplexImage& img) { return from_complex(img.data, {img.height, img.width}); }

inline ComplexImage to_image(const Tensor& t) {
  if (t.dims.size() != 2) throw FormatError("ktn: image tensors must be 2-D");
  return ComplexImage(t.dims[0], t.dims[1], to_complex(t));
}

inline Tensor from_kspace(const KSpaceData& y) { return from_complex(y.data, {y.coils, y.rows, y.cols}); }

inline KSpaceData to_kspace(const Tensor& t) {
  if (t.dims.size() != 3) throw FormatError("ktn: k-space tensors must be 3-D");
  KSpaceData y(t.dims[0], t.dims[1], t.dims[2]);
  y.data = to_complex(t);
  return y;
}

inline Tensor from_sensitivities(const CoilSensitivities& s) { return from_complex(s.maps, {s.coils, s.rows, s.cols}); }

inline CoilSensitivities to_sensitivities(const Tensor& t) {
  if (t.dims.size() != 3) throw FormatError("ktn: sensitivity tensors must be 3-D");
  return {t.dims[0], t.dims[1], t.dims[2], to_complex(t)};
}

/// Masks are stored as f32 with values {0, 1}.
inline Tensor from_mask(const SamplingMask& m) {
  Tensor t{DType::f32, {m.rows, m.cols}, {}};
  t.values.assign(m.pattern.begin(), m.pattern.end());
  return t;
}

inline SamplingMask to_mask(const Tensor& t) {
  if (t.dims.size() != 2 || is_complex(t.dtype)) throw FormatError("ktn: masks must be real 2-D");
  SamplingMask m;
  m.rows = t.dims[0];
  m.cols = t.dims[1];
  m.pattern.resize(t.values.size());
  for (std::size_t i = 0; i < t.values.size(); ++i) m.pattern[i] = t.values[i] != 0.0 ? 1 : 0;
  if (m.count() == 0) throw FormatError("ktn: mask has no sampled entries");
  m.acceleration = static_cast<double>(m.cols) / static_cast<double>(m.sampled_columns().size());
  return m;
}

}  // namespace teu::ktn
