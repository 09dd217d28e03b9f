#include <gtest/gtest.h>

#include "oracles.hpp"
#include "teu/nn/dataset.hpp"
#include "teu/nn/train.hpp"

using namespace teu;
using namespace teu::nn;

namespace {

SimulationSpec small_sim(std::size_t n = 16) {
  SimulationSpec s;
  s.size = n;
  return s;
}

ModelSpec model_spec(unroll::Algorithm alg, int T, NetworkSpec net = NetworkSpec::resnet_toy()) {
  ModelSpec m{{}, net};
  m.unroll.algorithm = alg;
  m.unroll.T = T;
  m.unroll.sharing = unroll::is_time_embedded(alg) ? unroll::Sharing::time_embedded : unroll::Sharing::shared;
  return m;
}

double sample_loss(const UnrolledModel& m, const TrainingSample& s) {
  Tape t;
  return m.loss(t, s).item();
}

}  // namespace

TEST(Train, ZeroEpochsLeavesParameters) {
  UnrolledModel m(model_spec(unroll::Algorithm::alg1, 2), 3);
  const auto before = m.params().values();
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto rep = train(m, simulate_dataset(small_sim(8), 2, 1), cfg);
  EXPECT_EQ(rep.steps, 0);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(m.params().value(i).data, before[i].data);
}

TEST(Train, OverfitsSingleSample) {
  const auto data = simulate_dataset(small_sim(16), 1, 2);
  UnrolledModel m(model_spec(unroll::Algorithm::vsqp, 3), 4);
  const double initial = sample_loss(m, data[0]);
  TrainConfig cfg;
  cfg.epochs = 500;
  const auto rep = train(m, data, cfg);
  const double final_loss = sample_loss(m, data[0]);
  EXPECT_EQ(rep.steps, 500);
  EXPECT_LE(final_loss, initial / 10.0) << "initial " << initial << " final " << final_loss;
}

TEST(Train, BitExactAcrossRunsAndThreadCounts) {
  const auto data = simulate_dataset(small_sim(8), 6, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.seed = 11;
  auto run = [&](int threads) {
    UnrolledModel m(model_spec(unroll::Algorithm::alg1, 2), 5);
    auto c = cfg;
    c.threads = threads;
    auto rep = train(m, data, c);
    return std::pair{rep.epoch_loss, m.params().values()};
  };
  const auto a = run(1), b = run(1), c = run(3);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.first, c.first);
  for (std::size_t i = 0; i < a.second.size(); ++i) {
    EXPECT_EQ(a.second[i].data, b.second[i].data);
    EXPECT_EQ(a.second[i].data, c.second[i].data);
  }
}

TEST(Train, TapeForwardMatchesInferenceEngine) {
  const auto data = simulate_dataset(small_sim(16), 1, 6);
  const auto& s = data[0];
  for (auto alg : {unroll::Algorithm::vsqp, unroll::Algorithm::admm, unroll::Algorithm::alg1,
                   unroll::Algorithm::vsqp_te, unroll::Algorithm::admm_te}) {
    UnrolledModel m(model_spec(alg, 3), 7);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 0.1);
    for (std::size_t i = 0; i < m.params().size(); ++i)
      if (m.params().name(i).find(".film.") != std::string::npos)
        for (auto& v : m.params().value(i).data) v = g(rng);
    Tape t;
    std::vector<double> gaps;
    const CVec taped = from_channels(m.forward(t, *s.E, s.y, &gaps).value());
    const auto res = m.reconstruct(*s.E, s.y);
    EXPECT_LE(relative_error(taped, res.x), 1e-10) << unroll::to_string(alg);
    ASSERT_EQ(gaps.size(), res.diagnostics.size());
    for (std::size_t k = 0; k < gaps.size(); ++k)
      EXPECT_NEAR(gaps[k], res.diagnostics[k].x_u_nmse, 1e-8 * (1.0 + gaps[k])) << unroll::to_string(alg);
  }
}

TEST(Train, ScheduleGradientsMatchFiniteDifferences) {
  const auto data = simulate_dataset(small_sim(8), 1, 9);
  UnrolledModel m(model_spec(unroll::Algorithm::alg1, 2), 10);
  auto& store = m.params();
  Tape t;
  t.backward(m.loss(t, data[0]));
  auto grads = store.zeros_like();
  t.accumulate_parameter_grads(grads);
  std::vector<double> analytic, numeric;
  for (const char* name : {"sched.mu", "sched.rho"}) {
    const auto k = store.index_of(name);
    for (std::size_t i = 0; i < store.value(k).size(); ++i) {
      double& w = store.value(k).data[i];
      const double w0 = w, h = 1e-7 * std::max(1.0, std::abs(w0));
      w = w0 + h;
      const double fp = sample_loss(m, data[0]);
      w = w0 - h;
      const double fm = sample_loss(m, data[0]);
      w = w0;
      analytic.push_back(grads[k].data[i]);
      numeric.push_back((fp - fm) / (2 * h));
    }
  }
  EXPECT_LE(oracle::rel_err(analytic, numeric), 1e-6);
}

TEST(Train, NonFiniteLossNamesBatch) {
  const auto data = simulate_dataset(small_sim(8), 4, 12);
  UnrolledModel m(model_spec(unroll::Algorithm::vsqp, 2), 13);
  auto& w = m.params().value(m.params().index_of("net0.out.bias"));
  w.data[0] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.batch_size = 2;
  try {
    train(m, data, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}

TEST(Model, SchedulesProjectionAndSharing) {
  UnrolledModel m(model_spec(unroll::Algorithm::alg1, 4), 14);
  EXPECT_EQ(m.params().value(m.params().index_of("sched.mu")).size(), 4u);
  EXPECT_EQ(m.params().value(m.params().index_of("sched.rho")).size(), 4u);
  m.params().value(m.params().index_of("sched.mu")).data[2] = -3.0;
  m.project();
  EXPECT_EQ(m.schedules().mu.values[2], unroll::kMuFloor);

  auto shared = model_spec(unroll::Algorithm::vsqp, 5);
  auto unshared = shared;
  unshared.unroll.sharing = unroll::Sharing::unshared;
  UnrolledModel a(shared, 1), b(unshared, 1);
  EXPECT_EQ(b.networks().size(), 5u);
  EXPECT_EQ(b.network_parameter_count(), 5 * a.network_parameter_count());
  EXPECT_FALSE(b.params().contains("sched.rho"));
  UnrolledModel c(model_spec(unroll::Algorithm::admm, 2), 1);
  EXPECT_TRUE(c.params().contains("sched.lambda"));
}

TEST(Evaluate, ReportsPerSampleMetrics) {
  const auto data = simulate_dataset(small_sim(16), 3, 15);
  UnrolledModel m(model_spec(unroll::Algorithm::vsqp, 2), 16);
  const auto a = evaluate(m, data, 1), b = evaluate(m, data, 2);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_TRUE(std::isfinite(a[i].report.psnr_db));
    EXPECT_NEAR(a[i].loss, sample_loss(m, data[i]), 1e-10 * (1.0 + a[i].loss));
  }
}
