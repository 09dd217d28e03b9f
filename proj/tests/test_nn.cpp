#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "teu/nn/checkpoint.hpp"
#include "teu/nn/networks.hpp"
#include "teu/nn/unrolled.hpp"

using namespace teu;
using namespace teu::nn;

using namespace gradcheck;

TEST(Tape, SquareHasGradientSix) {
  Tape t;
  Var w = t.leaf(Tensor::scalar(3.0), true);
  t.backward(mul(w, w));
  EXPECT_EQ(t.grad(w.id).data[0], 6.0);
}

TEST(Tape, ErrorPaths) {
  Tape t;
  Var a = t.leaf(Tensor({3}, 1.0), true);
  EXPECT_THROW(t.backward(a), std::invalid_argument);
  Var c = t.constant(Tensor::scalar(2.0));
  EXPECT_THROW(t.backward(c), std::logic_error);
  EXPECT_THROW(add(a, t.constant(Tensor({4}))), DimensionError);
  EXPECT_THROW(div(c, t.constant(Tensor::scalar(0.0))), NumericError);
  EXPECT_THROW(conv2d(t.constant(Tensor({1, 4, 4})), t.constant(Tensor({1, 1, 2, 2}))), DimensionError);
  EXPECT_THROW(sinusoidal_encode(1.0, 5), DimensionError);
}

TEST(GradCheck, ElementwiseAndReductions) {
  std::mt19937_64 rng(1);
  const auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  const auto s = Tensor::scalar(1.7), d = Tensor::scalar(-0.8);
  const double tol = 1e-6;
  EXPECT_LE(grad_check({a, b}, [](Tape&, const auto& v) { return add(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a, b}, [](Tape&, const auto& v) { return sub(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a, b}, [](Tape&, const auto& v) { return mul(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a, s}, [](Tape&, const auto& v) { return scale(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return scale(v[0], -2.5); }), tol);
  EXPECT_LE(grad_check({s, d}, [](Tape&, const auto& v) { return div(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a, b}, [](Tape&, const auto& v) { return dot(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return sum(v[0]); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return mean(v[0]); }), tol);
  EXPECT_LE(grad_check({a, b}, [](Tape&, const auto& v) { return mse(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return relu(v[0]); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return silu(v[0]); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return reshape(v[0], {4, 3}); }), tol);
  EXPECT_LE(grad_check({a}, [](Tape&, const auto& v) { return select(reshape(v[0], {12}), 5); }), tol);
  EXPECT_LE(grad_check({a, random_tensor({4, 2}, rng)}, [](Tape&, const auto& v) { return matmul(v[0], v[1]); }), tol);
}

TEST(GradCheck, SpatialOps) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor({4, 6, 6}, rng), y = random_tensor({2, 6, 6}, rng);
  const double tol = 1e-6;
  EXPECT_LE(grad_check({random_tensor({4}, rng)}, [](Tape&, const auto& v) { return broadcast_channels(v[0], 3, 5); }), tol);
  EXPECT_LE(grad_check({x, y}, [](Tape&, const auto& v) { return concat_channels(v[0], v[1]); }), tol);
  EXPECT_LE(grad_check({x}, [](Tape&, const auto& v) { return avg_pool2(v[0]); }), tol);
  EXPECT_LE(grad_check({random_tensor({2, 3, 3}, rng)}, [](Tape&, const auto& v) { return upsample2(v[0]); }), tol);
  EXPECT_LE(grad_check({x, random_tensor({3, 4, 3, 3}, rng), random_tensor({3}, rng)},
                       [](Tape&, const auto& v) { return conv2d(v[0], v[1], v[2]); }),
            tol);
  EXPECT_LE(grad_check({x, random_tensor({5, 4, 1, 1}, rng)}, [](Tape&, const auto& v) { return conv2d(v[0], v[1]); }),
            tol);
  EXPECT_LE(grad_check({x}, [](Tape&, const auto& v) { return group_norm(v[0], 2); }), tol);
  EXPECT_LE(grad_check({x, random_tensor({4}, rng), random_tensor({4}, rng)},
                       [](Tape&, const auto& v) { return film_modulate(v[0], v[1], v[2], 2); }),
            tol);
  EXPECT_LE(grad_check({x, random_tensor({4}, rng), random_tensor({4}, rng)},
                       [](Tape&, const auto& v) { return film_residual_modulate(v[0], v[1], v[2], 0.1, 4); }),
            tol);
}

TEST(GradCheck, LinearMapAndUnrolledCg) {
  std::mt19937_64 rng(3);
  const auto A = oracle::random_spd(6, 10.0, rng).real().eval();
  auto apply = [A](const Tensor& v) {
    Tensor out(v.shape);
    Eigen::Map<Eigen::VectorXd>(out.data.data(), 6) = A * Eigen::Map<const Eigen::VectorXd>(v.data.data(), 6);
    return out;
  };
  const auto b = random_tensor({6}, rng);
  EXPECT_LE(grad_check({b}, [&](Tape&, const auto& v) { return linear_apply(v[0], apply); }), 1e-6);
  EXPECT_LE(grad_check({b, Tensor::scalar(0.3)},
                       [&](Tape&, const auto& v) { return tape_cg(apply, v[0], v[1], 4, 0.0); }),
            1e-6);
}

TEST(GradCheck, ToyNetworksEndToEnd) {
  EXPECT_LE(network_grad_check(NetworkSpec::resnet_toy(true), 8, 50, 4), 1e-5);
  EXPECT_LE(network_grad_check(NetworkSpec::resnet_toy(false), 8, 50, 5), 1e-5);
  EXPECT_LE(network_grad_check(NetworkSpec::unet_toy(true), 8, 50, 6), 1e-5);
}

TEST(Film, IdentityReductions) {
  std::mt19937_64 rng(7);
  Tape t;
  Var F = t.constant(random_tensor({8, 5, 5}, rng));
  Var ones = t.constant(Tensor({8}, 1.0)), zeros = t.constant(Tensor({8}, 0.0));
  EXPECT_EQ(film_modulate(F, ones, zeros, 4).value().data, group_norm(F, 4).value().data);
  Var alpha = t.constant(random_tensor({8}, rng)), beta = t.constant(random_tensor({8}, rng));
  EXPECT_EQ(film_residual_modulate(F, zeros, zeros, 0.1, 4).value().data, F.value().data);
  EXPECT_EQ(film_residual_modulate(F, alpha, beta, 0.0, 4).value().data, F.value().data);
}

TEST(Film, ZeroHeadsMatchStaticNetwork) {
  ParameterStore s_static, s_te;
  std::mt19937_64 r1(8), r2(9);
  ProxNetwork plain(NetworkSpec::resnet_toy(false), s_static, "net", r1);
  ProxNetwork te(NetworkSpec::resnet_toy(true), s_te, "net", r2);
  for (std::size_t i = 0; i < s_static.size(); ++i) s_te.value(s_te.index_of(s_static.name(i))) = s_static.value(i);
  std::mt19937_64 rng(10);
  const auto x = oracle::random_cvec(64, rng);
  const auto ref = plain.apply(s_static, x, 8, 8);
  for (int step : {0, 4, 9}) EXPECT_EQ(te.apply(s_te, x, 8, 8, step), ref);
}

TEST(TimeEmbedding, SinusoidalEncoder) {
  EXPECT_EQ(sinusoidal_encode(0.0, 4).data, (std::vector<double>{0.0, 0.0, 1.0, 1.0}));
  std::vector<Tensor> codes;
  for (int t = 0; t < 64; ++t) codes.push_back(sinusoidal_encode(t, 32));
  double min_dist = 1e300;
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t j = i + 1; j < codes.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 32; ++k) d += std::pow(codes[i].data[k] - codes[j].data[k], 2);
      min_dist = std::min(min_dist, std::sqrt(d));
    }
  EXPECT_GT(min_dist, 1e-3);
}

TEST(TimeEmbedding, NetworksDependOnStep) {
  std::mt19937_64 rng(11);
  const auto x = oracle::random_cvec(64, rng);
  for (auto spec : {NetworkSpec::resnet_toy(true), NetworkSpec::unet_toy(true)}) {
    ParameterStore store;
    ProxNetwork net(spec, store, "net", rng);
    randomize(store, ".film.", rng, 0.1);
    EXPECT_NE(net.apply(store, x, 8, 8, 0), net.apply(store, x, 8, 8, 1));
    EXPECT_THROW(net.apply(store, x, 8, 8), std::invalid_argument);
  }
}

TEST(Networks, ZeroParametersGiveIdentity) {
  std::mt19937_64 rng(12);
  const auto x = oracle::random_cvec(16 * 16, rng);
  for (auto spec : {NetworkSpec::resnet_toy(), NetworkSpec::unet_toy(), NetworkSpec::resnet_toy(true)}) {
    ParameterStore store;
    ProxNetwork net(spec, store, "net", rng);
    for (auto& v : store.values()) std::fill(v.data.begin(), v.data.end(), 0.0);
    const std::optional<int> step = spec.time_embedded ? std::optional<int>(2) : std::nullopt;
    EXPECT_EQ(net.apply(store, x, 16, 16, step), x);
  }
}

TEST(Networks, OutputShapes) {
  std::mt19937_64 rng(13);
  for (auto spec : {NetworkSpec::resnet_toy(), NetworkSpec::unet_toy(), NetworkSpec::unet_toy(true)}) {
    ParameterStore store;
    ProxNetwork net(spec, store, "net", rng);
    for (std::size_t n : {16u, 32u, 64u}) {
      Tape t;
      const std::optional<int> step = spec.time_embedded ? std::optional<int>(0) : std::nullopt;
      Var out = net.forward(t, store, t.constant(Tensor({2, n, n})), step);
      EXPECT_EQ(out.shape(), (Shape{2, n, n}));
    }
  }
  ParameterStore store;
  ProxNetwork unet(NetworkSpec::unet_toy(), store, "net", rng);
  EXPECT_THROW(unet.apply(store, CVec(100), 10, 10), DimensionError);
}

TEST(Networks, ParameterBrackets) {
  const double resnet_ref = 592129, unet_ref = 1724035;
  const auto rs = parameter_count(NetworkSpec::resnet_full()), us = parameter_count(NetworkSpec::unet_full());
  EXPECT_GE(rs, 0.5 * resnet_ref);
  EXPECT_LE(rs, 2.0 * resnet_ref);
  EXPECT_GE(us, 0.5 * unet_ref);
  EXPECT_LE(us, 2.0 * unet_ref);
  EXPECT_LE(parameter_count(NetworkSpec::resnet_full(true)), 1.5 * rs);
  EXPECT_LE(parameter_count(NetworkSpec::unet_full(true)), 1.5 * us);
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const auto dir = std::filesystem::temp_directory_path() / "teu_ckpt_test";
  std::filesystem::remove_all(dir);
  ModelSpec spec{{}, NetworkSpec::resnet_toy()};
  spec.unroll.T = 3;
  UnrolledModel a(spec, 1), b(spec, 2);
  save_checkpoint(a.params(), dir);
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) differs |= a.params().value(i).data != b.params().value(i).data;
  EXPECT_TRUE(differs);
  load_checkpoint(b.params(), dir);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params().value(i).data, b.params().value(i).data);

  ModelSpec other{{}, NetworkSpec::unet_toy()};
  other.unroll.T = 3;
  UnrolledModel c(other, 1);
  EXPECT_THROW(load_checkpoint(c.params(), dir), CheckpointError);
  EXPECT_THROW(load_checkpoint(c.params(), dir / "missing"), CheckpointError);
  std::filesystem::remove_all(dir);
}
