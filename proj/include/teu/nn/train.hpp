#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "teu/metrics.hpp"
#include "teu/nn/adam.hpp"
#include "teu/nn/unrolled.hpp"

namespace teu::nn {

struct TrainConfig {
  int epochs = 1;
  std::size_t batch_size = 1;
  AdamConfig adam;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (epochs < 0) throw ConfigError("train.epochs", "must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
    if (threads < 1) throw ConfigError("train.threads", "must be >= 1");
  }
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-sample loss seen during each epoch
  long steps = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

inline LossAndGrad loss_and_grad(const UnrolledModel& model, const TrainingSample& s) {
  Tape t;
  Var l = model.loss(t, s);
  LossAndGrad out{l.item(), model.params().zeros_like()};
  if (!std::isfinite(out.loss)) return out;
  t.backward(l);
  t.accumulate_parameter_grads(out.grads);
  return out;
}

/// Runs f(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Adam on the mean-squared reconstruction error. Samples are visited in a
/// seeded shuffle each epoch; per-sample gradients are reduced in a fixed
/// order, so results do not depend on the thread count.
inline TrainReport train(UnrolledModel& model, const std::vector<TrainingSample>& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainReport report;
  if (cfg.epochs == 0) return report;
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  Adam opt(model.params(), cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long batch_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<LossAndGrad> parts(n);
      try {
        parallel_for(n, cfg.threads, [&](std::size_t i) { parts[i] = loss_and_grad(model, data[order[start + i]]); });
      } catch (const NumericError& e) {
        throw NumericError("train: non-finite values at batch " + std::to_string(batch_index) + " (" + e.what() + ")");
      }
      auto grads = model.params().zeros_like();
      double batch_loss = 0.0;
      for (const auto& p : parts) {
        if (!std::isfinite(p.loss))
          throw NumericError("train: non-finite loss at batch " + std::to_string(batch_index));
        batch_loss += p.loss;
        for (std::size_t k = 0; k < grads.size(); ++k)
          for (std::size_t i = 0; i < grads[k].size(); ++i) grads[k].data[i] += p.grads[k].data[i] / static_cast<double>(n);
      }
      total += batch_loss;
      opt.step(model.params(), grads);
      model.project();
      ++report.steps;
    }
    report.epoch_loss.push_back(total / static_cast<double>(data.size()));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  return report;
}

struct SampleMetrics {
  double loss = 0.0;  // mean squared error over the 2-channel image
  metrics::MetricReport report;
};

/// Tape-free evaluation of every sample.
inline std::vector<SampleMetrics> evaluate(const UnrolledModel& model, const std::vector<TrainingSample>& data,
                                           int threads = 1) {
  std::vector<SampleMetrics> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const auto& s = data[i];
    const auto res = model.reconstruct(*s.E, s.y);
    const ComplexImage x(s.reference.height, s.reference.width, res.x);
    double se = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) se += std::norm(x.data[k] - s.reference.data[k]);
    out[i].loss = se / (2.0 * static_cast<double>(x.size()));
    out[i].report = metrics::evaluate(s.reference, x);
  });
  return out;
}

}  // namespace teu::nn
