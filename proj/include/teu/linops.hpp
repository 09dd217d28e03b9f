#pragma once

// Linear-operator abstraction, conjugate gradient for the regularised normal
// equations, and the trace / spectral-norm estimators VAMP relies on.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>

#include "teu/core.hpp"
#include "teu/signal_model.hpp"

namespace teu {

/// Square map C^dim -> C^dim. Closures must not mutate captured state.
struct LinearMap {
  std::function<CVec(std::span<const cplx>)> apply;
  std::size_t dim = 0;
  bool self_adjoint = true;

  CVec operator()(std::span<const cplx> x) const {
    if (x.size() != dim) throw DimensionError("LinearMap: input length does not match dim");
    return apply(x);
  }
};

/// Rectangular map C^cols -> C^rows with its adjoint. `normal`, when set,
/// evaluates A^H A directly.
struct LinearOperator {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::function<CVec(std::span<const cplx>)> forward;
  std::function<CVec(std::span<const cplx>)> adjoint;
  std::function<CVec(std::span<const cplx>)> normal;
};

inline LinearOperator as_linear_operator(const EncodingOperator& E) {
  return {E.kspace_size(), E.image_size(),
          [&E](std::span<const cplx> x) { return E.forward(x).data; },
          [&E](std::span<const cplx> y) { return E.adjoint(y); },
          [&E](std::span<const cplx> x) { return E.normal(x); }};
}

inline LinearOperator as_linear_operator(Eigen::MatrixXcd A) {
  auto shared = std::make_shared<const Eigen::MatrixXcd>(std::move(A));
  const auto rows = static_cast<std::size_t>(shared->rows());
  const auto cols = static_cast<std::size_t>(shared->cols());
  auto fwd = [shared](std::span<const cplx> x) {
    Eigen::Map<const Eigen::VectorXcd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXcd out = (*shared) * v;
    return CVec(out.data(), out.data() + out.size());
  };
  auto adj = [shared](std::span<const cplx> y) {
    Eigen::Map<const Eigen::VectorXcd> v(y.data(), static_cast<Eigen::Index>(y.size()));
    Eigen::VectorXcd out = shared->adjoint() * v;
    return CVec(out.data(), out.data() + out.size());
  };
  return {rows, cols, fwd, adj, {}};
}

/// A^H A as a self-adjoint map.
inline LinearMap normal_map(const LinearOperator& A) {
  if (A.normal) return {A.normal, A.cols, true};
  return {[A](std::span<const cplx> x) { return A.adjoint(A.forward(x)); }, A.cols, true};
}

/// A + mu I.
inline LinearMap shifted(const LinearMap& A, double mu) {
  return {[A, mu](std::span<const cplx> x) {
            CVec out = A.apply(x);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += mu * x[i];
            return out;
          },
          A.dim, A.self_adjoint};
}

inline LinearMap identity_map(std::size_t n) {
  return {[](std::span<const cplx> x) { return CVec(x.begin(), x.end()); }, n, true};
}

inline LinearMap diagonal_map(std::vector<double> diag) {
  const std::size_t n = diag.size();
  return {[d = std::move(diag)](std::span<const cplx> x) {
            CVec out(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = d[i] * x[i];
            return out;
          },
          n, true};
}

inline LinearMap dense_map(Eigen::MatrixXcd A) {
  if (A.rows() != A.cols()) throw DimensionError("dense_map: matrix must be square");
  const auto n = static_cast<std::size_t>(A.rows());
  const bool herm = A.isApprox(A.adjoint(), 1e-14);
  auto shared = std::make_shared<const Eigen::MatrixXcd>(std::move(A));
  return {[shared](std::span<const cplx> x) {
            Eigen::Map<const Eigen::VectorXcd> v(x.data(), static_cast<Eigen::Index>(x.size()));
            Eigen::VectorXcd out = (*shared) * v;
            return CVec(out.data(), out.data() + out.size());
          },
          n, herm};
}

/// Materialises a map by probing it with unit vectors.
inline Eigen::MatrixXcd to_dense(const LinearMap& A) {
  const auto n = static_cast<Eigen::Index>(A.dim);
  Eigen::MatrixXcd M(n, n);
  CVec e(A.dim, cplx{0.0, 0.0});
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    const CVec col = A.apply(e);
    for (Eigen::Index i = 0; i < n; ++i) M(i, j) = col[i];
    e[j] = 0.0;
  }
  return M;
}

inline Eigen::MatrixXcd to_dense(const LinearOperator& A) {
  Eigen::MatrixXcd M(static_cast<Eigen::Index>(A.rows), static_cast<Eigen::Index>(A.cols));
  CVec e(A.cols, cplx{0.0, 0.0});
  for (std::size_t j = 0; j < A.cols; ++j) {
    e[j] = 1.0;
    const CVec col = A.forward(e);
    for (std::size_t i = 0; i < A.rows; ++i) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    e[j] = 0.0;
  }
  return M;
}

struct CgReport {
  int iterations_run = 0;
  double final_residual_norm = 0.0;
  bool converged = false;
};

struct CgResult {
  CVec x;
  CgReport report;
};

/// Conjugate gradient on a self-adjoint positive (semi-)definite map. Stops
/// after `max_iters` steps or once ‖r‖ <= tol ‖b‖. Zero initial guess unless
/// `x0` is given.
inline CgResult cg_solve(const LinearMap& A, std::span<const cplx> b, int max_iters = 15, double tol = 1e-12,
                         std::optional<std::span<const cplx>> x0 = std::nullopt) {
  if (b.size() != A.dim) throw DimensionError("cg_solve: rhs length does not match operator");
  if (!all_finite(b)) throw NumericError("cg_solve: non-finite right-hand side");
  CgResult res;
  CVec& x = res.x;
  CVec r;
  if (x0) {
    if (x0->size() != A.dim) throw DimensionError("cg_solve: initial guess length mismatch");
    x.assign(x0->begin(), x0->end());
    r = sub(b, A.apply(x));
  } else {
    x.assign(A.dim, cplx{0.0, 0.0});
    r.assign(b.begin(), b.end());
  }
  const double threshold = tol * norm2(b);
  double rs = norm_sq(r);
  res.report.final_residual_norm = std::sqrt(rs);
  if (std::sqrt(rs) <= threshold) {
    res.report.converged = true;
    return res;
  }
  CVec p = r;
  for (int k = 1; k <= max_iters; ++k) {
    const CVec Ap = A.apply(p);
    const double pAp = cdot(p, Ap).real();
    if (!std::isfinite(pAp)) throw NumericError("cg_solve: non-finite curvature");
    if (pAp < 0.0) throw NumericError("cg_solve: operator is not positive semi-definite");
    if (pAp == 0.0) break;
    const double alpha = rs / pAp;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    const double rs_new = norm_sq(r);
    if (!std::isfinite(rs_new)) throw NumericError("cg_solve: non-finite residual");
    res.report.iterations_run = k;
    res.report.final_residual_norm = std::sqrt(rs_new);
    if (std::sqrt(rs_new) <= threshold) {
      res.report.converged = true;
      break;
    }
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return res;
}

/// Rademacher (+-1 real) probe vector.
inline CVec rademacher(std::size_t n, std::mt19937_64& rng) {
  CVec v(n);
  for (auto& e : v) e = (rng() & 1u) ? 1.0 : -1.0;
  return v;
}

/// Hutchinson estimate of (1/N) Tr[(A + mu I)^{-1}].
inline double estimate_trace_inverse(const LinearMap& A, double mu, int num_probes, std::uint64_t seed,
                                     int cg_iters = 100, double cg_tol = 1e-12) {
  if (num_probes < 1) throw std::invalid_argument("estimate_trace_inverse: need at least one probe");
  const LinearMap shifted_A = shifted(A, mu);
  std::mt19937_64 rng(seed);
  double acc = 0.0;
  for (int k = 0; k < num_probes; ++k) {
    const CVec v = rademacher(A.dim, rng);
    const auto solve = cg_solve(shifted_A, v, cg_iters, cg_tol);
    acc += cdot(v, solve.x).real();
  }
  return acc / (static_cast<double>(num_probes) * static_cast<double>(A.dim));
}

/// Eigenvalues of a self-adjoint map, for exact trace evaluation when the
/// dimension is small enough to materialise.
class HermitianSpectrum {
 public:
  explicit HermitianSpectrum(const LinearMap& A) {
    const Eigen::MatrixXcd M = to_dense(A);
    const Eigen::MatrixXcd H = 0.5 * (M + M.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("HermitianSpectrum: eigensolver failed");
    eigenvalues_ = es.eigenvalues();
  }

  /// (1/N) Tr[(A + mu I)^{-1}]
  double trace_inverse(double mu) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) s += 1.0 / (eigenvalues_[i] + mu);
    return s / static_cast<double>(eigenvalues_.size());
  }

  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

 private:
  Eigen::VectorXd eigenvalues_;
};

inline double exact_trace_inverse(const LinearMap& A, double mu) { return HermitianSpectrum(A).trace_inverse(mu); }

/// Rayleigh-quotient estimate of the largest eigenvalue of a self-adjoint map.
inline double power_iteration_norm(const LinearMap& A, int iters, std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("power_iteration_norm: iters must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  CVec v(A.dim);
  for (auto& e : v) e = {g(rng), g(rng)};
  double lambda = 0.0;
  for (int k = 0; k < iters; ++k) {
    const double nv = norm2(v);
    if (nv == 0.0) return 0.0;
    for (auto& e : v) e /= nv;
    CVec Av = A.apply(v);
    lambda = cdot(v, Av).real();
    v = std::move(Av);
  }
  return lambda;
}

}  // namespace teu
