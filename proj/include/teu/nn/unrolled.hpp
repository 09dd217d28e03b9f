#pragma once

// Unrolled reconstruction with learnable schedules and network regularisers.
// The same iteration as teu::unroll, recorded on a tape so it can be trained;
// the inner CG is unrolled for its fixed iteration budget.

#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "teu/linops.hpp"
#include "teu/nn/networks.hpp"
#include "teu/signal_model.hpp"
#include "teu/unroll.hpp"

namespace teu::nn {

struct TrainingSample {
  std::shared_ptr<const EncodingOperator> E;
  CVec y;
  ComplexImage reference;
};

struct ModelSpec {
  unroll::UnrollConfig unroll;
  NetworkSpec net;
};

/// x = argmin ||Ex - y||^2 + mu ||x - anchor||^2 by CG, on the tape.
/// `rhs` is E^H y + mu * anchor.
inline Var tape_cg(const std::function<Tensor(const Tensor&)>& normal, Var rhs, Var mu, int iters, double tol) {
  Tape& t = *rhs.tape;
  double bnorm = 0.0;
  for (double v : rhs.value().data) bnorm += v * v;
  if (!std::isfinite(bnorm)) throw NumericError("tape_cg: non-finite right-hand side");
  const double threshold = tol * std::sqrt(bnorm);
  Var x = t.constant(Tensor(rhs.shape(), 0.0));
  Var r = rhs;
  Var p = rhs;
  Var rs = dot(r, r);
  if (std::sqrt(rs.item()) <= threshold) return x;
  for (int k = 0; k < iters; ++k) {
    Var Ap = add(linear_apply(p, normal), scale(p, mu));
    Var pAp = dot(p, Ap);
    if (!std::isfinite(pAp.item())) throw NumericError("tape_cg: non-finite curvature");
    if (pAp.item() < 0.0) throw NumericError("tape_cg: operator is not positive semi-definite");
    if (pAp.item() == 0.0) break;
    Var alpha = div(rs, pAp);
    x = add(x, scale(p, alpha));
    r = sub(r, scale(Ap, alpha));
    Var rs_new = dot(r, r);
    if (std::sqrt(rs_new.item()) <= threshold) break;
    p = add(r, scale(p, div(rs_new, rs)));
    rs = rs_new;
  }
  return x;
}

class UnrolledModel {
 public:
  UnrolledModel(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.unroll.validate();
    const auto alg = spec_.unroll.algorithm;
    spec_.net.time_embedded = unroll::is_time_embedded(alg);
    const auto defaults = unroll::default_schedules(spec_.unroll);
    mu_ = store_.add("sched.mu", Tensor({defaults.mu.values.size()}, defaults.mu.values));
    if (alg == unroll::Algorithm::alg1) rho_ = store_.add("sched.rho", Tensor({defaults.rho.values.size()}, defaults.rho.values));
    if (unroll::uses_dual(alg)) lambda_ = store_.add("sched.lambda", Tensor({1}, defaults.lambda.values));
    std::mt19937_64 rng(seed);
    const int count = spec_.unroll.sharing == unroll::Sharing::unshared ? spec_.unroll.T : 1;
    for (int i = 0; i < count; ++i) nets_.emplace_back(spec_.net, store_, "net" + std::to_string(i), rng);
  }

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const std::vector<ProxNetwork>& networks() const { return nets_; }

  /// Scalar count of the regulariser networks alone.
  std::size_t network_parameter_count() const { return store_.scalar_count("net"); }

  unroll::Schedules schedules() const {
    unroll::Schedules s;
    s.mu = {store_.value(mu_).data, true, unroll::kMuFloor};
    s.rho = rho_ ? unroll::ScalarSchedule{store_.value(*rho_).data, true} : unroll::ScalarSchedule::constant(1, 0.0);
    s.lambda = lambda_ ? unroll::ScalarSchedule{store_.value(*lambda_).data, true} : unroll::ScalarSchedule::constant(1, 0.0);
    return s;
  }

  /// Keeps every mu above the floor after an optimiser step.
  void project() {
    for (auto& v : store_.value(mu_).data) v = std::max(v, unroll::kMuFloor);
  }

  /// Reconstruction [2, H, W] recorded on `t`. Optionally reports the
  /// per-unroll ||x - u||^2 / ||x||^2 gap.
  Var forward(Tape& t, const EncodingOperator& E, std::span<const cplx> y, std::vector<double>* gaps = nullptr) const {
    const std::size_t H = E.rows(), W = E.cols();
    const auto alg = spec_.unroll.algorithm;
    const bool te = unroll::is_time_embedded(alg);
    auto normal = [&E, H, W](const Tensor& v) {
      const CVec c = from_channels(v);
      return to_channels(E.normal(c), H, W);
    };
    Var EHy = t.constant(to_channels(E.adjoint(y), H, W));
    Var x = EHy, z = EHy, r = EHy;
    Var u = t.constant(Tensor({2, H, W}, 0.0));
    Var mu = t.parameter(store_, mu_);
    const int T = spec_.unroll.T;
    for (int k = 0; k < T; ++k) {
      Var mu_k = select(mu, te && mu.value().size() > 1 ? static_cast<std::size_t>(k) : 0);
      const ProxNetwork& net = nets_.size() == 1 ? nets_[0] : nets_[static_cast<std::size_t>(k)];
      std::optional<int> step;
      if (te) step.emplace(k);
      auto solve = [&](Var anchor) {
        return tape_cg(normal, add(EHy, scale(anchor, mu_k)), mu_k, spec_.unroll.cg_iters, spec_.unroll.cg_tol);
      };
      double gap = 0.0;
      switch (alg) {
        case unroll::Algorithm::vsqp:
        case unroll::Algorithm::vsqp_te:
          x = solve(z);
          z = net.forward(t, store_, x, step);
          break;
        case unroll::Algorithm::admm:
        case unroll::Algorithm::admm_te: {
          x = solve(sub(z, u));
          gap = sq_norm(u) / sq_norm(x);
          z = net.forward(t, store_, add(x, u), step);
          Var lambda = select(t.parameter(store_, *lambda_), 0);
          u = add(u, scale(sub(x, z), lambda));
          break;
        }
        case unroll::Algorithm::alg1: {
          x = solve(r);
          Var rho = t.parameter(store_, *rho_);
          Var rho_k = select(rho, rho.value().size() > 1 ? static_cast<std::size_t>(k) : 0);
          u = add(x, scale(sub(x, r), rho_k));
          gap = sq_dist(u, x) / sq_norm(x);
          r = net.forward(t, store_, u, step);
          break;
        }
      }
      if (gaps) gaps->push_back(gap);
    }
    return x;
  }

  Var loss(Tape& t, const TrainingSample& s) const {
    Var x = forward(t, *s.E, s.y);
    return mse(x, t.constant(to_channels(s.reference.data, s.reference.height, s.reference.width)));
  }

  /// Regularisers as plain proximal maps for the analytic engine.
  unroll::ProxBank prox_bank(std::size_t h, std::size_t w) const {
    unroll::ProxBank bank;
    for (const auto& net : nets_)
      bank.nets.push_back([this, &net, h, w](std::span<const cplx> v, std::optional<int> step) {
        return net.apply(store_, v, h, w, step);
      });
    return bank;
  }

  /// Inference without a tape.
  unroll::UnrollResult reconstruct(const EncodingOperator& E, std::span<const cplx> y,
                                   const unroll::RunOptions& opts = {}) const {
    return unroll::run_unrolled(spec_.unroll, as_linear_operator(E), y, schedules(), prox_bank(E.rows(), E.cols()), opts);
  }

 private:
  static double sq_norm(Var v) {
    double s = 0.0;
    for (double a : v.value().data) s += a * a;
    return s;
  }
  static double sq_dist(Var a, Var b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) {
      const double d = a.value().data[i] - b.value().data[i];
      s += d * d;
    }
    return s;
  }

  ModelSpec spec_;
  ParameterStore store_;
  std::size_t mu_ = 0;
  std::optional<std::size_t> rho_, lambda_;
  std::vector<ProxNetwork> nets_;
};

}  // namespace teu::nn
