#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "teu/nn/ops.hpp"

namespace teu::nn {

inline Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

inline std::size_t default_groups(std::size_t channels) {
  std::size_t g = std::min<std::size_t>(8, channels);
  while (channels % g) --g;
  return g;
}

struct Conv2d {
  std::size_t in = 0, out = 0, k = 3;
  std::size_t weight = 0, bias = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel,
         std::mt19937_64& rng)
      : in(cin), out(cout), k(kernel) {
    weight = store.add(name + ".weight", kaiming_uniform({cout, cin, kernel, kernel}, cin * kernel * kernel, rng));
    bias = store.add(name + ".bias", Tensor({cout}, 0.0));
  }

  Var operator()(Tape& t, const ParameterStore& store, Var x) const {
    return conv2d(x, t.parameter(store, weight), t.parameter(store, bias));
  }
};

struct Linear {
  std::size_t in = 0, out = 0;
  std::size_t weight = 0, bias = 0;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng,
         bool zero_init = false)
      : in(fan_in), out(fan_out) {
    weight = store.add(name + ".weight",
                       zero_init ? Tensor({fan_out, fan_in}, 0.0) : kaiming_uniform({fan_out, fan_in}, fan_in, rng));
    bias = store.add(name + ".bias", Tensor({fan_out}, 0.0));
  }

  /// x [in] -> [out]
  Var operator()(Tape& t, const ParameterStore& store, Var x) const {
    Var y = matmul(t.parameter(store, weight), reshape(x, {in, 1}));
    return add(reshape(y, {out}), t.parameter(store, bias));
  }
};

/// Group norm followed by a learned per-channel scale and shift.
struct GroupNormAffine {
  std::size_t channels = 0, groups = 1;
  std::size_t gamma = 0, beta = 0;

  GroupNormAffine() = default;
  GroupNormAffine(ParameterStore& store, const std::string& name, std::size_t c)
      : channels(c), groups(default_groups(c)) {
    gamma = store.add(name + ".gamma", Tensor({c}, 1.0));
    beta = store.add(name + ".beta", Tensor({c}, 0.0));
  }

  Var operator()(Tape& t, const ParameterStore& store, Var x) const {
    const std::size_t h = x.shape()[1], w = x.shape()[2];
    Var n = group_norm(x, groups);
    return add(mul(n, broadcast_channels(t.parameter(store, gamma), h, w)),
               broadcast_channels(t.parameter(store, beta), h, w));
  }
};

/// alpha * GN(F) + beta, with per-channel alpha, beta [C].
inline Var film_modulate(Var features, Var alpha, Var beta, std::size_t groups) {
  const std::size_t h = features.shape()[1], w = features.shape()[2];
  return add(mul(group_norm(features, groups), broadcast_channels(alpha, h, w)), broadcast_channels(beta, h, w));
}

/// F + tau * (alpha * GN(F) + beta).
inline Var film_residual_modulate(Var features, Var alpha, Var beta, double tau, std::size_t groups) {
  return add(features, scale(film_modulate(features, alpha, beta, groups), tau));
}

/// Sinusoidal encoding of a step index: sin terms in the first half, cos in
/// the second, frequencies period^(-2k/dim).
inline Tensor sinusoidal_encode(double t, std::size_t dim, double period = 10000.0) {
  if (dim == 0 || dim % 2) throw DimensionError("sinusoidal_encode: dim must be even and positive");
  Tensor e({dim});
  const std::size_t half = dim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(period, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    e.data[k] = std::sin(t * freq);
    e.data[half + k] = std::cos(t * freq);
  }
  return e;
}

struct TimeEmbedSpec {
  std::size_t dim = 32;
  std::size_t hidden = 128;
  double period = 10000.0;
};

/// Shared MLP over the step encoding; returns SiLU(f(t)) ready for the
/// per-block FiLM heads.
struct TimeEmbedder {
  TimeEmbedSpec spec;
  Linear l1, l2;

  TimeEmbedder() = default;
  TimeEmbedder(ParameterStore& store, const std::string& name, TimeEmbedSpec s, std::mt19937_64& rng) : spec(s) {
    l1 = Linear(store, name + ".fc1", s.dim, s.hidden, rng);
    l2 = Linear(store, name + ".fc2", s.hidden, s.hidden, rng);
  }

  Var operator()(Tape& t, const ParameterStore& store, int step) const {
    Var e = t.constant(sinusoidal_encode(static_cast<double>(step), spec.dim, spec.period));
    return silu(l2(t, store, silu(l1(t, store, e))));
  }
};

/// Per-block FiLM heads; zero-initialised so they start as the identity.
struct FilmHeads {
  Linear alpha, beta;

  FilmHeads() = default;
  FilmHeads(ParameterStore& store, const std::string& name, std::size_t hidden, std::size_t channels,
            std::mt19937_64& rng)
      : alpha(store, name + ".alpha", hidden, channels, rng, true), beta(store, name + ".beta", hidden, channels, rng, true) {}
};

}  // namespace teu::nn
