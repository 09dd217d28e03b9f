#pragma once

// Differentiable primitives. Images are [C, H, W]; scalars are shape {1}.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "teu/nn/tape.hpp"

namespace teu::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch [" + shape_string(a.shape()) + "] vs [" +
                         shape_string(b.shape()) + "]");
}

inline void require_scalar(const Var& s, const char* op) {
  if (s.value().size() != 1) throw DimensionError(std::string(op) + ": expected a scalar");
}

inline void require_chw(const Var& x, const char* op) {
  if (x.shape().size() != 3) throw DimensionError(std::string(op) + ": expected a [C, H, W] tensor");
}

inline void accumulate(Tensor& dst, const Tensor& src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += scale * src.data[i];
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::require_same(a, b, "add");
  Tensor out = a.value();
  detail::accumulate(out, b.value());
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) detail::accumulate(t.grad(ia), g);
    if (t.requires_grad(ib)) detail::accumulate(t.grad(ib), g);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same(a, b, "sub");
  Tensor out = a.value();
  detail::accumulate(out, b.value(), -1.0);
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) detail::accumulate(t.grad(ia), g);
    if (t.requires_grad(ib)) detail::accumulate(t.grad(ib), g, -1.0);
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const auto& va = t.value(ia);
    const auto& vb = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
    }
  });
}

/// s * a with a differentiable scalar s.
inline Var scale(Var a, Var s) {
  detail::require_scalar(s, "scale");
  const double sv = s.item();
  Tensor out = a.value();
  for (auto& v : out.data) v *= sv;
  const auto ia = a.id, is = s.id;
  return a.tape->record(std::move(out), {a, s}, [ia, is](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) detail::accumulate(t.grad(ia), g, t.value(is).data[0]);
    if (t.requires_grad(is)) {
      const auto& va = t.value(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data[i] * va.data[i];
      t.grad(is).data[0] += acc;
    }
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data) v *= c;
  const auto ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia, c](Tape& t, const Tensor& g) {
    detail::accumulate(t.grad(ia), g, c);
  });
}

/// a / b for scalars.
inline Var div(Var a, Var b) {
  detail::require_scalar(a, "div");
  detail::require_scalar(b, "div");
  const double bv = b.item();
  if (bv == 0.0) throw NumericError("div: division by zero");
  const auto ia = a.id, ib = b.id;
  return a.tape->record(Tensor::scalar(a.item() / bv), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const double av = t.value(ia).data[0], bv = t.value(ib).data[0];
    if (t.requires_grad(ia)) t.grad(ia).data[0] += g.data[0] / bv;
    if (t.requires_grad(ib)) t.grad(ib).data[0] -= g.data[0] * av / (bv * bv);
  });
}

inline Var dot(Var a, Var b) {
  detail::require_same(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value().data[i] * b.value().data[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->record(Tensor::scalar(acc), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const double gv = g.data[0];
    if (t.requires_grad(ia)) detail::accumulate(t.grad(ia), t.value(ib), gv);
    if (t.requires_grad(ib)) detail::accumulate(t.grad(ib), t.value(ia), gv);
  });
}

inline Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data) acc += v;
  const auto ia = a.id;
  return a.tape->record(Tensor::scalar(acc), {a}, [ia](Tape& t, const Tensor& g) {
    for (auto& v : t.grad(ia).data) v += g.data[0];
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Mean squared difference.
inline Var mse(Var a, Var b) {
  detail::require_same(a, b, "mse");
  const auto& va = a.value().data;
  const auto& vb = b.value().data;
  const double n = static_cast<double>(va.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += (va[i] - vb[i]) * (va[i] - vb[i]);
  const auto ia = a.id, ib = b.id;
  return a.tape->record(Tensor::scalar(acc / n), {a, b}, [ia, ib, n](Tape& t, const Tensor& g) {
    const auto& va = t.value(ia).data;
    const auto& vb = t.value(ib).data;
    const double c = 2.0 * g.data[0] / n;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia).data;
      for (std::size_t i = 0; i < va.size(); ++i) ga[i] += c * (va[i] - vb[i]);
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib).data;
      for (std::size_t i = 0; i < va.size(); ++i) gb[i] -= c * (va[i] - vb[i]);
    }
  });
}

inline Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  const auto ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    const auto& x = t.value(ia).data;
    auto& gx = t.grad(ia).data;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) gx[i] += g.data[i];
  });
}

inline Var silu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
  const auto ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    const auto& x = t.value(ia).data;
    auto& gx = t.grad(ia).data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-x[i]));
      gx[i] += g.data[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

inline Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.value().size()) throw DimensionError("reshape: element count changes");
  Tensor out(std::move(shape), a.value().data);
  const auto ia = a.id;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    auto& ga = t.grad(ia).data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i];
  });
}

/// [m, k] x [k, n] -> [m, n].
inline Var matmul(Var a, Var b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) throw DimensionError("matmul: incompatible shapes");
  const auto m = static_cast<Eigen::Index>(sa[0]), k = static_cast<Eigen::Index>(sa[1]),
             n = static_cast<Eigen::Index>(sb[1]);
  Tensor out({sa[0], sb[1]});
  detail::MapRow(out.data.data(), m, n).noalias() =
      detail::CMapRow(a.value().data.data(), m, k) * detail::CMapRow(b.value().data.data(), k, n);
  const auto ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
    detail::CMapRow G(g.data.data(), m, n);
    if (t.requires_grad(ia))
      detail::MapRow(t.grad(ia).data.data(), m, k).noalias() += G * detail::CMapRow(t.value(ib).data.data(), k, n).transpose();
    if (t.requires_grad(ib))
      detail::MapRow(t.grad(ib).data.data(), k, n).noalias() += detail::CMapRow(t.value(ia).data.data(), m, k).transpose() * G;
  });
}

/// v [C] -> [C, H, W], constant over each channel.
inline Var broadcast_channels(Var v, std::size_t h, std::size_t w) {
  if (v.shape().size() != 1) throw DimensionError("broadcast_channels: expected a vector");
  const std::size_t C = v.shape()[0], hw = h * w;
  Tensor out({C, h, w});
  for (std::size_t c = 0; c < C; ++c) std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(c * hw), hw, v.value().data[c]);
  const auto iv = v.id;
  return v.tape->record(std::move(out), {v}, [iv, C, hw](Tape& t, const Tensor& g) {
    auto& gv = t.grad(iv).data;
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += g.data[c * hw + i];
      gv[c] += acc;
    }
  });
}

/// Concatenation along the channel axis.
inline Var concat_channels(Var a, Var b) {
  detail::require_chw(a, "concat_channels");
  detail::require_chw(b, "concat_channels");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[1] != sb[1] || sa[2] != sb[2]) throw DimensionError("concat_channels: spatial sizes differ");
  Tensor out({sa[0] + sb[0], sa[1], sa[2]});
  std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.value().size()));
  const auto ia = a.id, ib = b.id;
  const std::size_t na = a.value().size();
  return a.tape->record(std::move(out), {a, b}, [ia, ib, na](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      auto& ga = t.grad(ia).data;
      for (std::size_t i = 0; i < na; ++i) ga[i] += g.data[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib).data;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.data[na + i];
    }
  });
}

/// 2x2 average pooling; H and W must be even.
inline Var avg_pool2(Var x) {
  detail::require_chw(x, "avg_pool2");
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  if (H % 2 || W % 2) throw DimensionError("avg_pool2: spatial size must be even");
  const std::size_t h = H / 2, w = W / 2;
  Tensor out({C, h, w});
  const auto& v = x.value().data;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t q = 0; q < w; ++q) {
        const std::size_t base = c * H * W + 2 * r * W + 2 * q;
        out.data[(c * h + r) * w + q] = 0.25 * (v[base] + v[base + 1] + v[base + W] + v[base + W + 1]);
      }
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, C, H, W](Tape& t, const Tensor& g) {
    auto& gx = t.grad(ix).data;
    const std::size_t h = H / 2, w = W / 2;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t q = 0; q < w; ++q) {
          const double v = 0.25 * g.data[(c * h + r) * w + q];
          const std::size_t base = c * H * W + 2 * r * W + 2 * q;
          gx[base] += v;
          gx[base + 1] += v;
          gx[base + W] += v;
          gx[base + W + 1] += v;
        }
  });
}

/// Nearest-neighbour 2x upsampling.
inline Var upsample2(Var x) {
  detail::require_chw(x, "upsample2");
  const std::size_t C = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t H = 2 * h, W = 2 * w;
  Tensor out({C, H, W});
  const auto& v = x.value().data;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t q = 0; q < W; ++q) out.data[(c * H + r) * W + q] = v[(c * h + r / 2) * w + q / 2];
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, C, h, w](Tape& t, const Tensor& g) {
    auto& gx = t.grad(ix).data;
    const std::size_t H = 2 * h, W = 2 * w;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t q = 0; q < W; ++q) gx[(c * h + r / 2) * w + q / 2] += g.data[(c * H + r) * W + q];
  });
}

/// Scalar v[i] of a vector.
inline Var select(Var v, std::size_t i) {
  if (i >= v.value().size()) throw std::out_of_range("select: index out of range");
  const auto iv = v.id;
  return v.tape->record(Tensor::scalar(v.value().data[i]), {v}, [iv, i](Tape& t, const Tensor& g) {
    t.grad(iv).data[i] += g.data[0];
  });
}

namespace detail {

// cols[(ci*k + ki)*k + kj, r*W + c] = x[ci, r + ki - p, c + kj - p] (zero outside).
inline void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k, double* cols) {
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
  for (std::size_t ci = 0; ci < C; ++ci)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((ci * k + ki) * k + kj) * H * W;
        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - p, dj = static_cast<std::ptrdiff_t>(kj) - p;
        for (std::ptrdiff_t r = 0; r < Hs; ++r) {
          double* out = row + r * Ws;
          const std::ptrdiff_t sr = r + di;
          if (sr < 0 || sr >= Hs) {
            std::fill_n(out, W, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::ptrdiff_t>(ci) * Hs + sr) * Ws;
          for (std::ptrdiff_t c = 0; c < Ws; ++c) {
            const std::ptrdiff_t sc = c + dj;
            out[c] = (sc >= 0 && sc < Ws) ? src[sc] : 0.0;
          }
        }
      }
}

inline void col2im_add(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k, double* x) {
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
  for (std::size_t ci = 0; ci < C; ++ci)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((ci * k + ki) * k + kj) * H * W;
        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - p, dj = static_cast<std::ptrdiff_t>(kj) - p;
        for (std::ptrdiff_t r = 0; r < Hs; ++r) {
          const std::ptrdiff_t sr = r + di;
          if (sr < 0 || sr >= Hs) continue;
          const double* in = row + r * Ws;
          double* dst = x + (static_cast<std::ptrdiff_t>(ci) * Hs + sr) * Ws;
          for (std::ptrdiff_t c = 0; c < Ws; ++c) {
            const std::ptrdiff_t sc = c + dj;
            if (sc >= 0 && sc < Ws) dst[sc] += in[c];
          }
        }
      }
}

}  // namespace detail

/// Stride-1 "same" convolution (cross-correlation) with an odd k x k kernel.
/// x [Cin, H, W], w [Cout, Cin, k, k], b [Cout] or null.
inline Var conv2d(Var x, Var w, std::optional<Var> b = std::nullopt) {
  detail::require_chw(x, "conv2d");
  const auto& sw = w.shape();
  const std::size_t Cin = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  if (sw.size() != 4 || sw[1] != Cin || sw[2] != sw[3] || sw[2] % 2 == 0)
    throw DimensionError("conv2d: weight must be [Cout, Cin, k, k] with odd k matching the input channels");
  const std::size_t Cout = sw[0], k = sw[2], hw = H * W, K = Cin * k * k;
  if (b && (b->shape().size() != 1 || b->shape()[0] != Cout)) throw DimensionError("conv2d: bias must be [Cout]");

  std::vector<double> cols(K * hw);
  detail::im2col(x.value().data.data(), Cin, H, W, k, cols.data());
  Tensor out({Cout, H, W});
  auto Y = detail::MapRow(out.data.data(), static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(hw));
  const auto Wm = detail::CMapRow(w.value().data.data(), static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(K));
  Y.noalias() = Wm * detail::CMapRow(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(hw));
  if (b)
    for (std::size_t c = 0; c < Cout; ++c) Y.row(static_cast<Eigen::Index>(c)).array() += b->value().data[c];

  const auto ix = x.id, iw = w.id;
  const std::optional<std::uint32_t> ib = b ? std::optional<std::uint32_t>(b->id) : std::nullopt;
  auto backward = [ix, iw, ib, Cin, Cout, H, W, k, hw, K](Tape& t, const Tensor& g) {
    const auto G = detail::CMapRow(g.data.data(), static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(hw));
    if (ib && t.requires_grad(*ib)) {
      auto& gb = t.grad(*ib).data;
      for (std::size_t c = 0; c < Cout; ++c) gb[c] += G.row(static_cast<Eigen::Index>(c)).sum();
    }
    if (t.requires_grad(iw)) {
      std::vector<double> cols(K * hw);
      detail::im2col(t.value(ix).data.data(), Cin, H, W, k, cols.data());
      detail::MapRow(t.grad(iw).data.data(), static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(K)).noalias() +=
          G * detail::CMapRow(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(hw)).transpose();
    }
    if (t.requires_grad(ix)) {
      std::vector<double> dcols(K * hw);
      detail::MapRow(dcols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(hw)).noalias() =
          detail::CMapRow(t.value(iw).data.data(), static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(K))
              .transpose() *
          G;
      detail::col2im_add(dcols.data(), Cin, H, W, k, t.grad(ix).data.data());
    }
  };
  if (b) return x.tape->record(std::move(out), {x, w, *b}, std::move(backward));
  return x.tape->record(std::move(out), {x, w}, std::move(backward));
}

/// Group normalisation without affine parameters.
inline Var group_norm(Var x, std::size_t groups, double eps = 1e-5) {
  detail::require_chw(x, "group_norm");
  const std::size_t C = x.shape()[0], hw = x.shape()[1] * x.shape()[2];
  if (groups == 0 || C % groups) throw DimensionError("group_norm: channels must divide into groups");
  const std::size_t per = (C / groups) * hw;
  Tensor out(x.shape());
  std::vector<double> means(groups), inv_std(groups);
  const auto& v = x.value().data;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* src = v.data() + gi * per;
    double m = 0.0;
    for (std::size_t i = 0; i < per; ++i) m += src[i];
    m /= static_cast<double>(per);
    double var = 0.0;
    for (std::size_t i = 0; i < per; ++i) var += (src[i] - m) * (src[i] - m);
    var /= static_cast<double>(per);
    means[gi] = m;
    inv_std[gi] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < per; ++i) out.data[gi * per + i] = (src[i] - m) * inv_std[gi];
  }
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, groups, per, means, inv_std](Tape& t, const Tensor& g) {
    const auto& v = t.value(ix).data;
    auto& gx = t.grad(ix).data;
    const double n = static_cast<double>(per);
    std::vector<double> xhat(per);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t off = gi * per;
      double mg = 0.0, mgx = 0.0;
      for (std::size_t i = 0; i < per; ++i) {
        xhat[i] = (v[off + i] - means[gi]) * inv_std[gi];
        mg += g.data[off + i];
        mgx += g.data[off + i] * xhat[i];
      }
      mg /= n;
      mgx /= n;
      for (std::size_t i = 0; i < per; ++i) gx[off + i] += inv_std[gi] * (g.data[off + i] - mg - xhat[i] * mgx);
    }
  });
}

/// Applies a real-linear map f; its gradient applies `adjoint` (f itself when
/// f is self-adjoint).
inline Var linear_apply(Var x, std::function<Tensor(const Tensor&)> f,
                        std::function<Tensor(const Tensor&)> adjoint = {}) {
  Tensor out = f(x.value());
  if (!adjoint) adjoint = f;
  const auto ix = x.id;
  return x.tape->record(std::move(out), {x}, [ix, adjoint](Tape& t, const Tensor& g) {
    detail::accumulate(t.grad(ix), adjoint(g));
  });
}

}  // namespace teu::nn
