#pragma once

// Independent reference implementations used only by the tests.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "teu/core.hpp"
#include "teu/signal_model.hpp"

namespace oracle {

using teu::cplx;
using teu::CVec;

inline Eigen::VectorXcd vec(const CVec& v) { return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline CVec unvec(const Eigen::VectorXcd& v) { return CVec(v.data(), v.data() + v.size()); }

/// Centred unitary DFT matrix: index k <-> frequency k - n/2, index j <->
/// position j - n/2 (n even).
inline Eigen::MatrixXcd centred_dft(int n) {
  Eigen::MatrixXcd F(n, n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) {
      const double ph = -2.0 * std::numbers::pi * (k - n / 2) * (j - n / 2) / n;
      F(k, j) = s * cplx(std::cos(ph), std::sin(ph));
    }
  return F;
}

/// E = blockdiag(mask) (F_rows (x) F_cols) diag(s_c), stacked over coils,
/// assembled from the textbook DFT sum.
inline Eigen::MatrixXcd encoding_matrix(const teu::SamplingMask& m, const teu::CoilSensitivities& s) {
  const int R = static_cast<int>(m.rows), C = static_cast<int>(m.cols), N = R * C;
  const auto Fr = centred_dft(R), Fc = centred_dft(C);
  Eigen::MatrixXcd F2(N, N);
  for (int k1 = 0; k1 < R; ++k1)
    for (int k2 = 0; k2 < C; ++k2)
      for (int n1 = 0; n1 < R; ++n1)
        for (int n2 = 0; n2 < C; ++n2) F2(k1 * C + k2, n1 * C + n2) = Fr(k1, n1) * Fc(k2, n2);
  Eigen::MatrixXcd E = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(s.coils) * N, N);
  for (std::size_t c = 0; c < s.coils; ++c)
    for (int k = 0; k < N; ++k) {
      if (!m.pattern[static_cast<std::size_t>(k)]) continue;
      for (int n = 0; n < N; ++n)
        E(static_cast<Eigen::Index>(c) * N + k, n) = F2(k, n) * s.maps[c * static_cast<std::size_t>(N) + static_cast<std::size_t>(n)];
    }
  return E;
}

inline Eigen::MatrixXcd random_gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXcd A(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) A(i, j) = cplx(g(rng), g(rng));
  return A;
}

inline CVec random_cvec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CVec v(n);
  for (auto& x : v) x = cplx(g(rng), g(rng));
  return v;
}

/// Hermitian positive-definite matrix with prescribed condition number.
inline Eigen::MatrixXcd random_spd(int n, double cond, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(random_gaussian(n, n, rng));
  Eigen::MatrixXcd Q = qr.householderQ();
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = n == 1 ? 1.0 : std::pow(cond, static_cast<double>(i) / (n - 1));
  return Q * d.asDiagonal() * Q.adjoint();
}

inline Eigen::VectorXcd ridge(const Eigen::MatrixXcd& A, const Eigen::VectorXcd& y, double lambda) {
  const auto n = A.cols();
  Eigen::MatrixXcd M = A.adjoint() * A + lambda * Eigen::MatrixXcd::Identity(n, n);
  return M.ldlt().solve(A.adjoint() * y);
}

inline cplx soft(cplx v, double t) {
  const double a = std::abs(v);
  return a <= t ? cplx{0.0, 0.0} : v * (1.0 - t / a);
}

/// FISTA on 0.5 ||y - A x||^2 + lambda ||x||_1 (complex l1).
inline Eigen::VectorXcd fista_lasso(const Eigen::MatrixXcd& A, const Eigen::VectorXcd& y, double lambda, int iters) {
  const Eigen::MatrixXcd AhA = A.adjoint() * A;
  const Eigen::VectorXcd Ahy = A.adjoint() * y;
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(AhA).eigenvalues().maxCoeff();
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(A.cols()), z = x, prev = x;
  double tk = 1.0;
  for (int k = 0; k < iters; ++k) {
    Eigen::VectorXcd g = z - (AhA * z - Ahy) / L;
    for (Eigen::Index i = 0; i < g.size(); ++i) x(i) = soft(g(i), lambda / L);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    z = x + ((tk - 1.0) / tn) * (x - prev);
    prev = x;
    tk = tn;
  }
  return x;
}

/// SSIM by explicit per-window sums with the 2-D Gaussian window.
inline double ssim_windows(const std::vector<double>& a, const std::vector<double>& b, int h, int w, double L,
                           int win = 11, double sigma = 1.5) {
  std::vector<double> k(static_cast<std::size_t>(win * win));
  double tot = 0.0;
  const double c = (win - 1) / 2.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      k[static_cast<std::size_t>(i * win + j)] = v;
      tot += v;
    }
  for (auto& v : k) v /= tot;
  const double C1 = (0.01 * L) * (0.01 * L), C2 = (0.03 * L) * (0.03 * L);
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + win <= h; ++r)
    for (int q = 0; q + win <= w; ++q) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wt = k[static_cast<std::size_t>(i * win + j)];
          const double x = a[static_cast<std::size_t>((r + i) * w + q + j)];
          const double y = b[static_cast<std::size_t>((r + i) * w + q + j)];
          mx += wt * x;
          my += wt * y;
          sxx += wt * x * x;
          syy += wt * y * y;
          sxy += wt * x * y;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      acc += (2 * mx * my + C1) * (2 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      ++count;
    }
  return acc / count;
}

/// Central finite-difference gradient of a scalar function of a flat vector.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace oracle
