#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "teu/core.hpp"

namespace teu::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) throw DimensionError("Tensor: value count does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, v); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

/// Complex image <-> two-channel (real, imag) tensor of shape [2, H, W].
inline Tensor to_channels(std::span<const cplx> x, std::size_t h, std::size_t w) {
  if (x.size() != h * w) throw DimensionError("to_channels: size mismatch");
  Tensor t({2, h, w});
  for (std::size_t i = 0; i < x.size(); ++i) {
    t.data[i] = x[i].real();
    t.data[h * w + i] = x[i].imag();
  }
  return t;
}

inline CVec from_channels(const Tensor& t) {
  if (t.shape.size() != 3 || t.shape[0] != 2) throw DimensionError("from_channels: expected a [2, H, W] tensor");
  const std::size_t n = t.shape[1] * t.shape[2];
  CVec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {t.data[i], t.data[n + i]};
  return out;
}

/// Named, flat store of trainable tensors.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor init) {
    if (index_.contains(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
    index_.emplace(name, values_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter named " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  /// Total scalar count, optionally restricted to names starting with `prefix`.
  std::size_t scalar_count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (names_[i].starts_with(prefix)) n += values_[i].size();
    return n;
  }

  std::vector<Tensor> zeros_like() const {
    std::vector<Tensor> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.emplace_back(v.shape, 0.0);
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace teu::nn
