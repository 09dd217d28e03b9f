#pragma once

// Closed-form proximal operators with exact divergences. These act as
// verification oracles for the unrolled engines and as VAMP denoisers.
//
// Divergence convention: a C -> C map is viewed as R^2 -> R^2 and the
// divergence is the Jacobian trace averaged over all 2N real coordinates.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>

#include "teu/core.hpp"

namespace teu {

struct AnalyticProx {
  enum class Kind { identity, soft_threshold, tikhonov };

  Kind kind = Kind::identity;
  double param = 0.0;  // theta for soft_threshold, gamma (prior precision) for tikhonov
  // soft_threshold only: use theta / sqrt(noise_precision) as the threshold.
  bool noise_scaled = false;

  static AnalyticProx identity() { return {}; }
  static AnalyticProx soft_threshold(double theta, bool noise_scaled = false) {
    if (!(theta >= 0.0) || !std::isfinite(theta)) throw std::invalid_argument("soft_threshold: theta must be >= 0");
    return {Kind::soft_threshold, theta, noise_scaled};
  }
  static AnalyticProx tikhonov(double gamma) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("tikhonov: gamma must be >= 0");
    return {Kind::tikhonov, gamma, false};
  }

  double threshold(double noise_precision) const {
    return noise_scaled ? param / std::sqrt(noise_precision) : param;
  }

  /// Linear-MMSE gain mu sigma^2 / (mu sigma^2 + 1) with sigma^2 = 1/gamma.
  double tikhonov_gain(double noise_precision) const { return noise_precision / (noise_precision + param); }
};

namespace detail {
inline void require_precision(const AnalyticProx& p, double noise_precision) {
  const bool needs = p.kind == AnalyticProx::Kind::tikhonov ||
                     (p.kind == AnalyticProx::Kind::soft_threshold && p.noise_scaled);
  if (needs && !(noise_precision > 0.0)) throw std::invalid_argument("prox: noise_precision must be > 0");
}
}  // namespace detail

inline CVec apply(const AnalyticProx& p, std::span<const cplx> u, double noise_precision) {
  detail::require_precision(p, noise_precision);
  CVec out(u.begin(), u.end());
  switch (p.kind) {
    case AnalyticProx::Kind::identity:
      break;
    case AnalyticProx::Kind::soft_threshold: {
      const double theta = p.threshold(noise_precision);
      for (auto& v : out) {
        const double mag = std::abs(v);
        v = mag > theta ? v * (1.0 - theta / mag) : cplx{0.0, 0.0};
      }
      break;
    }
    case AnalyticProx::Kind::tikhonov: {
      const double g = p.tikhonov_gain(noise_precision);
      for (auto& v : out) v *= g;
      break;
    }
  }
  return out;
}

/// Normalised divergence of `apply` at u.
inline double divergence(const AnalyticProx& p, std::span<const cplx> u, double noise_precision) {
  detail::require_precision(p, noise_precision);
  switch (p.kind) {
    case AnalyticProx::Kind::identity:
      return 1.0;
    case AnalyticProx::Kind::tikhonov:
      return p.tikhonov_gain(noise_precision);
    case AnalyticProx::Kind::soft_threshold: {
      // Jacobian of v (1 - theta/|v|) on R^2 has trace 2 - theta/|v|.
      const double theta = p.threshold(noise_precision);
      double acc = 0.0;
      for (const auto& v : u) {
        const double mag = std::abs(v);
        if (mag > theta) acc += 1.0 - theta / (2.0 * mag);
      }
      return acc / static_cast<double>(u.size());
    }
  }
  return 0.0;
}

/// Any proximal map: (input, noise precision) -> output.
using ProxFn = std::function<CVec(std::span<const cplx>, double)>;

inline ProxFn as_prox_fn(const AnalyticProx& p) {
  return [p](std::span<const cplx> u, double mu) { return apply(p, u, mu); };
}

/// Monte Carlo divergence: (1/2N) <eta, (p(u + eps eta) - p(u)) / eps> with
/// independent Rademacher signs on real and imaginary parts.
inline double mc_divergence(const ProxFn& p, std::span<const cplx> u, double noise_precision, double epsilon,
                            std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("mc_divergence: epsilon must be > 0");
  std::mt19937_64 rng(seed);
  CVec eta(u.size());
  for (auto& e : eta) {
    const double re = (rng() & 1u) ? 1.0 : -1.0;
    const double im = (rng() & 1u) ? 1.0 : -1.0;
    e = {re, im};
  }
  CVec perturbed(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) perturbed[i] = u[i] + epsilon * eta[i];
  const CVec base = p(u, noise_precision);
  const CVec moved = p(perturbed, noise_precision);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const cplx d = (moved[i] - base[i]) / epsilon;
    acc += eta[i].real() * d.real() + eta[i].imag() * d.imag();
  }
  return acc / (2.0 * static_cast<double>(u.size()));
}

}  // namespace teu
