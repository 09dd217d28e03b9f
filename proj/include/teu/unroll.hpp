#pragma once

// Unrolled reconstruction engines on plain complex vectors.
//
//   vsqp     x = CG(E^H E + mu I, E^H y + mu z);        z' = prox(x)
//   admm     x = CG(E^H E + mu I, E^H y + mu (z - u));  z' = prox(x + u);  u' = u + lambda (x - z')
//   alg1     x = CG(E^H E + mu_t I, E^H y + mu_t r);    u  = x + rho_t (x - r);  r' = prox(u, t)
//   vsqp_te / admm_te  as vsqp / admm with mu_t and a time-aware prox.
//
// Unroll indices t run 0..T-1. Every engine starts from x = z = r = E^H y,
// u = 0 and returns the last CG output.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "teu/core.hpp"
#include "teu/linops.hpp"
#include "teu/prox.hpp"

namespace teu::unroll {

enum class Algorithm { vsqp, admm, alg1, vsqp_te, admm_te };
enum class Sharing { shared, unshared, time_embedded };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::vsqp: return "vsqp";
    case Algorithm::admm: return "admm";
    case Algorithm::alg1: return "alg1";
    case Algorithm::vsqp_te: return "vsqp_te";
    case Algorithm::admm_te: return "admm_te";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  for (auto a : {Algorithm::vsqp, Algorithm::admm, Algorithm::alg1, Algorithm::vsqp_te, Algorithm::admm_te})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline std::string_view to_string(Sharing s) {
  switch (s) {
    case Sharing::shared: return "shared";
    case Sharing::unshared: return "unshared";
    case Sharing::time_embedded: return "time_embedded";
  }
  return "?";
}

inline std::optional<Sharing> parse_sharing(std::string_view s) {
  for (auto v : {Sharing::shared, Sharing::unshared, Sharing::time_embedded})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline bool is_time_embedded(Algorithm a) {
  return a == Algorithm::alg1 || a == Algorithm::vsqp_te || a == Algorithm::admm_te;
}
inline bool uses_dual(Algorithm a) { return a == Algorithm::admm || a == Algorithm::admm_te; }

struct UnrollConfig {
  Algorithm algorithm = Algorithm::alg1;
  int T = 10;
  int cg_iters = 15;
  double cg_tol = 1e-12;
  Sharing sharing = Sharing::time_embedded;

  void validate() const {
    if (T < 1) throw ConfigError("unroll.T", "must be >= 1");
    if (cg_iters < 1) throw ConfigError("unroll.cg_iters", "must be >= 1");
    if (is_time_embedded(algorithm) && sharing != Sharing::time_embedded)
      throw ConfigError("unroll.sharing", "time-embedded algorithms need sharing = time_embedded");
    if (!is_time_embedded(algorithm) && sharing == Sharing::time_embedded)
      throw ConfigError("unroll.sharing", "baseline algorithms use shared or unshared regularisers");
  }
};

/// One scalar per unroll. Baseline algorithms read values[0] at every unroll.
struct ScalarSchedule {
  std::vector<double> values;
  bool learnable = true;
  double floor = -std::numeric_limits<double>::infinity();

  static ScalarSchedule constant(int T, double v, double floor = -std::numeric_limits<double>::infinity()) {
    return {std::vector<double>(static_cast<std::size_t>(T), v), true, floor};
  }

  double at(int t) const { return values.size() == 1 ? values[0] : values.at(static_cast<std::size_t>(t)); }

  void project() {
    for (auto& v : values) v = std::max(v, floor);
  }
};

inline constexpr double kMuFloor = 1e-6;

struct Schedules {
  ScalarSchedule mu;
  ScalarSchedule rho;
  ScalarSchedule lambda;
};

/// Initial values: mu = 5e-2 for VSQP, 1.5e-2 for ADMM and Alg. 1; rho and
/// lambda 1e-1.
inline Schedules default_schedules(const UnrollConfig& cfg) {
  const bool te = is_time_embedded(cfg.algorithm);
  const int n = te ? cfg.T : 1;
  const bool vsqp_like = cfg.algorithm == Algorithm::vsqp || cfg.algorithm == Algorithm::vsqp_te;
  Schedules s;
  s.mu = ScalarSchedule::constant(n, vsqp_like ? 5e-2 : 1.5e-2, kMuFloor);
  s.rho = ScalarSchedule::constant(cfg.algorithm == Algorithm::alg1 ? cfg.T : 1, 1e-1);
  s.lambda = ScalarSchedule::constant(1, 1e-1);
  return s;
}

struct UnrollState {
  CVec x;
  CVec z;
  CVec u;  // ADMM dual, or the Onsager-corrected estimate in Alg. 1
  CVec r;  // Alg. 1 denoiser output
  int t = 0;
};

/// Proximal map with an optional unroll index (absent for static networks).
using TimedProx = std::function<CVec(std::span<const cplx>, std::optional<int>)>;

inline TimedProx from_analytic(const AnalyticProx& p, double noise_precision = 1.0) {
  return [p, noise_precision](std::span<const cplx> u, std::optional<int>) { return apply(p, u, noise_precision); };
}

/// One regulariser (shared / time-embedded) or T of them (unshared).
struct ProxBank {
  std::vector<TimedProx> nets;

  const TimedProx& at(int t) const { return nets.size() == 1 ? nets[0] : nets.at(static_cast<std::size_t>(t)); }
};

/// The pieces of (E, y) every iteration needs.
struct DataTerm {
  LinearMap normal;
  CVec EHy;

  DataTerm(const LinearOperator& E, std::span<const cplx> y) : normal(normal_map(E)), EHy(E.adjoint(y)) {
    if (y.size() != E.rows) throw DimensionError("DataTerm: measurement length does not match operator");
  }

  CgResult solve(double mu, std::span<const cplx> anchor, int cg_iters, double cg_tol) const {
    if (!(mu > 0.0)) throw NumericError("data-fidelity step: mu must be > 0");
    CVec rhs(EHy.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = EHy[i] + mu * anchor[i];
    return cg_solve(shifted(normal, mu), rhs, cg_iters, cg_tol);
  }
};

struct StepResult {
  UnrollState state;
  CgReport cg;
};

inline StepResult vsqp_iteration(const DataTerm& data, const UnrollState& s, double mu, const TimedProx& prox,
                                 std::optional<int> t, int cg_iters, double cg_tol = 1e-12) {
  auto solve = data.solve(mu, s.z, cg_iters, cg_tol);
  StepResult out{s, solve.report};
  out.state.x = std::move(solve.x);
  out.state.z = prox(out.state.x, t);
  out.state.t = s.t + 1;
  return out;
}

inline StepResult admm_iteration(const DataTerm& data, const UnrollState& s, double mu, double lambda,
                                 const TimedProx& prox, std::optional<int> t, int cg_iters, double cg_tol = 1e-12) {
  const CVec anchor = sub(s.z, s.u);
  auto solve = data.solve(mu, anchor, cg_iters, cg_tol);
  StepResult out{s, solve.report};
  out.state.x = std::move(solve.x);
  CVec prox_in(s.u.size());
  for (std::size_t i = 0; i < prox_in.size(); ++i) prox_in[i] = out.state.x[i] + s.u[i];
  out.state.z = prox(prox_in, t);
  for (std::size_t i = 0; i < prox_in.size(); ++i) out.state.u[i] = s.u[i] + lambda * (out.state.x[i] - out.state.z[i]);
  out.state.t = s.t + 1;
  return out;
}

inline StepResult alg1_iteration(const DataTerm& data, const UnrollState& s, double mu_t, double rho_t,
                                 const TimedProx& prox, int t, int cg_iters, double cg_tol = 1e-12) {
  auto solve = data.solve(mu_t, s.r, cg_iters, cg_tol);
  StepResult out{s, solve.report};
  out.state.x = std::move(solve.x);
  for (std::size_t i = 0; i < s.r.size(); ++i)
    out.state.u[i] = out.state.x[i] + rho_t * (out.state.x[i] - s.r[i]);
  out.state.r = prox(out.state.u, t);
  out.state.t = s.t + 1;
  return out;
}

struct UnrollRecord {
  int unroll_index = 0;
  double mu_t = 0.0;
  double rho_t = 0.0;
  double cg_residual = 0.0;
  // ‖x^t - (prox input)‖² / ‖x^t‖²: the Onsager gap ‖x - u‖²/‖x‖² for Alg. 1,
  // ‖u‖²/‖x‖² for ADMM, zero for VSQP.
  double x_u_nmse = 0.0;
  double nmse_vs_ref = std::numeric_limits<double>::quiet_NaN();
};

struct UnrollResult {
  CVec x;
  UnrollState final_state;
  std::vector<UnrollRecord> diagnostics;
  std::vector<UnrollState> trajectory;  // filled when requested
};

struct RunOptions {
  std::optional<std::span<const cplx>> reference;
  bool record_trajectory = false;
};

inline UnrollState initial_state(const DataTerm& data) {
  UnrollState s;
  s.x = data.EHy;
  s.z = data.EHy;
  s.r = data.EHy;
  s.u.assign(data.EHy.size(), cplx{0.0, 0.0});
  return s;
}

inline void check_schedules(const UnrollConfig& cfg, const Schedules& sch, const ProxBank& bank) {
  const auto need = [&](const ScalarSchedule& s, const char* key, bool per_unroll) {
    const std::size_t n = s.values.size();
    const bool ok = per_unroll ? n == static_cast<std::size_t>(cfg.T) || n == 1 : n >= 1;
    if (!ok) throw ConfigError(key, "schedule length must be 1 or T");
    for (double v : s.values)
      if (!std::isfinite(v)) throw ConfigError(key, "schedule values must be finite");
  };
  need(sch.mu, "unroll.mu", true);
  for (double v : sch.mu.values)
    if (!(v > 0.0)) throw ConfigError("unroll.mu", "values must be > 0");
  if (cfg.algorithm == Algorithm::alg1) need(sch.rho, "unroll.rho", true);
  if (uses_dual(cfg.algorithm)) need(sch.lambda, "unroll.lambda", false);
  const std::size_t expected = cfg.sharing == Sharing::unshared ? static_cast<std::size_t>(cfg.T) : 1;
  if (bank.nets.size() != expected)
    throw ConfigError("model", "prox bank holds " + std::to_string(bank.nets.size()) + " regularisers, expected " +
                                   std::to_string(expected));
}

/// Runs cfg.T unrolls of the selected algorithm.
inline UnrollResult run_unrolled(const UnrollConfig& cfg, const LinearOperator& E, std::span<const cplx> y,
                                 const Schedules& sch, const ProxBank& bank, const RunOptions& opts = {}) {
  cfg.validate();
  check_schedules(cfg, sch, bank);
  const DataTerm data(E, y);
  UnrollState s = initial_state(data);
  const bool te = is_time_embedded(cfg.algorithm);

  UnrollResult res;
  if (opts.record_trajectory) res.trajectory.push_back(s);
  for (int t = 0; t < cfg.T; ++t) {
    const double mu = te ? sch.mu.at(t) : sch.mu.values[0];
    const TimedProx& prox = bank.at(t);
    const std::optional<int> time = te ? std::optional<int>(t) : std::nullopt;
    UnrollRecord rec;
    rec.unroll_index = t;
    rec.mu_t = mu;
    StepResult step;
    switch (cfg.algorithm) {
      case Algorithm::vsqp:
      case Algorithm::vsqp_te:
        step = vsqp_iteration(data, s, mu, prox, time, cfg.cg_iters, cfg.cg_tol);
        rec.x_u_nmse = 0.0;
        break;
      case Algorithm::admm:
      case Algorithm::admm_te:
        step = admm_iteration(data, s, mu, sch.lambda.values[0], prox, time, cfg.cg_iters, cfg.cg_tol);
        rec.x_u_nmse = norm_sq(s.u) / norm_sq(step.state.x);
        break;
      case Algorithm::alg1:
        rec.rho_t = sch.rho.at(t);
        step = alg1_iteration(data, s, mu, rec.rho_t, prox, t, cfg.cg_iters, cfg.cg_tol);
        rec.x_u_nmse = relative_error_sq(step.state.u, step.state.x);
        break;
    }
    rec.cg_residual = step.cg.final_residual_norm;
    s = std::move(step.state);
    if (opts.reference) rec.nmse_vs_ref = relative_error_sq(s.x, *opts.reference);
    res.diagnostics.push_back(rec);
    if (opts.record_trajectory) res.trajectory.push_back(s);
  }
  res.x = s.x;
  res.final_state = std::move(s);
  return res;
}

inline void write_csv(std::ostream& os, const std::vector<UnrollRecord>& diag) {
  os << "unroll_index,mu_t,rho_t,cg_residual,x_u_nmse,nmse_vs_ref\n";
  os.precision(17);
  for (const auto& r : diag)
    os << r.unroll_index << ',' << r.mu_t << ',' << r.rho_t << ',' << r.cg_residual << ',' << r.x_u_nmse << ','
       << r.nmse_vs_ref << '\n';
}

}  // namespace teu::unroll
