#pragma once

// Vector approximate message passing: an LMMSE data-fidelity step and a
// denoising step, each followed by its Onsager correction.
//
//   x   = (E^H E + mu_x I)^{-1} (E^H y + mu_x r)
//   v_x = Tr[(E^H E + mu_x I)^{-1}] / N,  mu_z = 1/v_x - mu_x
//   u   = (x / v_x - mu_x r) / mu_z
//   z   = prox(u; mu_z),  v_z = <div prox(u)> / mu_z,  mu_x' = 1/v_z - mu_z
//   r'  = (z / v_z - mu_z u) / mu_x'
//
// Precisions that fall to or below `mu_floor` are clamped and counted; a
// clamped message falls back to the estimate itself (u = x, r' = z).

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "teu/core.hpp"
#include "teu/linops.hpp"
#include "teu/prox.hpp"

namespace teu::vamp {

struct VampState {
  CVec r;
  double mu_x = 1.0;
  CVec x;
  double upsilon_x = 0.0;
  double mu_z = 0.0;
  CVec u;
  CVec z;
  double upsilon_z = 0.0;
};

struct VampConfig {
  int max_iters = 20;
  double damping = 0.9;
  int trace_probes = 32;
  double mu_floor = 1e-8;
  int cg_iters = 100;
  double cg_tol = 1e-12;
  std::size_t exact_trace_limit = 4096;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iters < 1) throw ConfigError("vamp.max_iters", "must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("vamp.damping", "must lie in (0, 1]");
    if (trace_probes < 1) throw ConfigError("vamp.trace_probes", "must be >= 1");
    if (!(mu_floor > 0.0)) throw ConfigError("vamp.mu_floor", "must be > 0");
  }
};

/// Denoiser plus the divergence used for its Onsager term.
struct Denoiser {
  std::function<CVec(std::span<const cplx>, double)> apply;
  std::function<double(std::span<const cplx>, double)> divergence;
};

inline Denoiser make_denoiser(const AnalyticProx& p) {
  return {[p](std::span<const cplx> u, double mu) { return teu::apply(p, u, mu); },
          [p](std::span<const cplx> u, double mu) { return teu::divergence(p, u, mu); }};
}

/// Black-box denoiser whose divergence is probed by Monte Carlo.
inline Denoiser make_mc_denoiser(ProxFn p, double epsilon = 1e-4, std::uint64_t seed = 0) {
  return {p, [p, epsilon, seed](std::span<const cplx> u, double mu) {
            return mc_divergence(p, u, mu, epsilon, seed);
          }};
}

/// Everything the LMMSE step needs about (E, y). Holds the spectrum of E^H E
/// when the problem is small enough for the exact trace.
class LmmseContext {
 public:
  LmmseContext(const LinearOperator& E, std::span<const cplx> y, const VampConfig& cfg)
      : normal_(normal_map(E)), EHy_(E.adjoint(y)) {
    if (y.size() != E.rows) throw DimensionError("LmmseContext: measurement length does not match operator");
    if (normal_.dim <= cfg.exact_trace_limit) spectrum_.emplace(normal_);
  }

  const LinearMap& normal() const { return normal_; }
  const CVec& EHy() const { return EHy_; }
  bool exact_trace() const { return spectrum_.has_value(); }

  double trace_inverse(double mu, const VampConfig& cfg, int iteration) const {
    if (spectrum_) return spectrum_->trace_inverse(mu);
    return estimate_trace_inverse(normal_, mu, cfg.trace_probes, cfg.seed + static_cast<std::uint64_t>(iteration),
                                  cfg.cg_iters, cfg.cg_tol);
  }

 private:
  LinearMap normal_;
  CVec EHy_;
  std::optional<HermitianSpectrum> spectrum_;
};

struct StepOutcome {
  int clamps = 0;
  double cg_residual = 0.0;
};

/// Fills x, upsilon_x, mu_z and u from r and mu_x.
inline StepOutcome lmmse_step(const LmmseContext& ctx, VampState& s, const VampConfig& cfg, int iteration = 0) {
  if (!(s.mu_x > 0.0)) throw NumericError("lmmse_step: mu_x must be > 0");
  const std::size_t n = ctx.normal().dim;
  if (s.r.size() != n) throw DimensionError("lmmse_step: r has the wrong length");
  StepOutcome out;
  CVec rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = ctx.EHy()[i] + s.mu_x * s.r[i];
  auto solve = cg_solve(shifted(ctx.normal(), s.mu_x), rhs, cfg.cg_iters, cfg.cg_tol);
  out.cg_residual = solve.report.final_residual_norm;
  s.x = std::move(solve.x);
  s.upsilon_x = ctx.trace_inverse(s.mu_x, cfg, iteration);
  s.mu_z = 1.0 / s.upsilon_x - s.mu_x;
  if (!(s.mu_z > cfg.mu_floor)) {
    s.mu_z = cfg.mu_floor;
    s.u = s.x;
    out.clamps = 1;
    return out;
  }
  s.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.u[i] = (s.x[i] / s.upsilon_x - s.mu_x * s.r[i]) / s.mu_z;
  return out;
}

/// Fills z and upsilon_z, then moves (r, mu_x) toward their corrected values
/// with the configured damping.
inline StepOutcome denoise_step(const Denoiser& d, VampState& s, const VampConfig& cfg) {
  if (!(s.mu_z > 0.0)) throw NumericError("denoise_step: mu_z must be > 0");
  StepOutcome out;
  s.z = d.apply(s.u, s.mu_z);
  s.upsilon_z = d.divergence(s.u, s.mu_z) / s.mu_z;
  if (!(s.upsilon_z > 0.0) || !std::isfinite(s.upsilon_z)) {
    out.clamps = 1;
    return out;
  }
  double mu_next = 1.0 / s.upsilon_z - s.mu_z;
  CVec r_next(s.z.size());
  if (!(mu_next > cfg.mu_floor)) {
    mu_next = cfg.mu_floor;
    r_next = s.z;
    out.clamps = 1;
  } else {
    for (std::size_t i = 0; i < r_next.size(); ++i) r_next[i] = (s.z[i] / s.upsilon_z - s.mu_z * s.u[i]) / mu_next;
  }
  const double a = cfg.damping;
  for (std::size_t i = 0; i < r_next.size(); ++i) s.r[i] = a * r_next[i] + (1.0 - a) * s.r[i];
  s.mu_x = a * mu_next + (1.0 - a) * s.mu_x;
  return out;
}

struct IterationRecord {
  int iteration = 0;
  double mu_x = 0.0;  // precision used by this iteration's LMMSE step
  double mu_z = 0.0;
  double upsilon_x = 0.0;
  double upsilon_z = 0.0;
  double nmse = std::numeric_limits<double>::quiet_NaN();
  int clamps = 0;
};

struct VampResult {
  CVec x;
  VampState state;
  std::vector<IterationRecord> trace;
  int total_clamps = 0;
};

/// Alternates LMMSE and denoising steps for cfg.max_iters iterations. Clamp
/// events are counted, never fatal.
inline VampResult run_vamp(const LinearOperator& E, std::span<const cplx> y, const Denoiser& denoiser,
                           const VampConfig& cfg, std::optional<VampState> init = std::nullopt,
                           std::optional<std::span<const cplx>> reference = std::nullopt) {
  cfg.validate();
  const LmmseContext ctx(E, y, cfg);
  VampState s;
  if (init) s = *init;
  if (s.r.empty()) s.r.assign(E.cols, cplx{0.0, 0.0});
  if (!(s.mu_x > 0.0)) throw NumericError("run_vamp: initial mu_x must be > 0");
  if (!all_finite(s.r)) throw NumericError("run_vamp: initial r is not finite");

  VampResult res;
  for (int it = 0; it < cfg.max_iters; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    rec.mu_x = s.mu_x;
    const auto a = lmmse_step(ctx, s, cfg, it);
    rec.upsilon_x = s.upsilon_x;
    rec.mu_z = s.mu_z;
    if (reference) rec.nmse = relative_error_sq(s.x, *reference);
    const auto b = denoise_step(denoiser, s, cfg);
    rec.upsilon_z = s.upsilon_z;
    rec.clamps = a.clamps + b.clamps;
    res.total_clamps += rec.clamps;
    res.trace.push_back(rec);
  }
  res.x = s.x;
  res.state = std::move(s);
  return res;
}

inline void write_csv(std::ostream& os, const std::vector<IterationRecord>& trace) {
  os << "iteration,mu_x,mu_z,upsilon_x,upsilon_z,nmse,clamps\n";
  os.precision(17);
  for (const auto& r : trace)
    os << r.iteration << ',' << r.mu_x << ',' << r.mu_z << ',' << r.upsilon_x << ',' << r.upsilon_z << ','
       << r.nmse << ',' << r.clamps << '\n';
}

}  // namespace teu::vamp
