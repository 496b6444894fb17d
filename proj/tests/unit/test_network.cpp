#include "stmd/eval.hpp"
#include "stmd/network.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace stmd {
namespace {

FieldInput random_input(Rng& rng, Eigen::Index dim, Eigen::Index n) {
  Vec r = uniform_vec(rng, n) * 0.5;
  Vec s = r + uniform_vec(rng, n) * 0.5;
  Batch z = standard_normal(rng, dim, n);
  Batch x = standard_normal(rng, dim, n);
  Vec t = uniform_vec(rng, n);
  return FieldInput::conditional(std::move(z), std::move(r), std::move(s), std::move(x), std::move(t));
}

TEST(NetConfig, ParameterCount) {
  NetConfig cfg;
  cfg.dim = 2;
  cfg.hidden = {16, 8};
  cfg.embed_dim = 4;
  const MlpNet net = MlpNet::init(cfg, 0);
  const int in = 2 * 2 + 3 * 4;
  EXPECT_EQ(cfg.input_width(), in);
  EXPECT_EQ(net.num_params(), static_cast<std::size_t>(in * 16 + 16 + 16 * 8 + 8 + 8 * 2 + 2));
  EXPECT_EQ(net.num_layers(), 3u);
}

TEST(NetConfig, Validation) {
  NetConfig cfg;
  cfg.embed_dim = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.embed_dim = 4;
  cfg.hidden = {8, 0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.hidden = {8};
  cfg.dim = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MlpNet, InitIsDeterministicAndBounded) {
  NetConfig cfg;
  cfg.hidden = {32, 32};
  const MlpNet a = MlpNet::init(cfg, 42);
  const MlpNet b = MlpNet::init(cfg, 42);
  const MlpNet c = MlpNet::init(cfg, 43);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.input_width()));
  EXPECT_LE(a.weight(0).cwiseAbs().maxCoeff(), bound);
  EXPECT_LE(a.bias(0).cwiseAbs().maxCoeff(), bound);
}

TEST(MlpNet, FromParamsChecksSize) {
  NetConfig cfg;
  cfg.hidden = {4};
  const MlpNet net = MlpNet::init(cfg, 1);
  EXPECT_THROW(MlpNet::from_params(cfg, std::vector<double>(net.num_params() + 1, 0.0)), ShapeError);
  const MlpNet copy = MlpNet::from_params(cfg, net.params());
  Rng rng(0);
  const FieldInput in = random_input(rng, 2, 3);
  EXPECT_EQ(copy.evaluate(in), net.evaluate(in));
}

TEST(MlpNet, RejectsMismatchedInput) {
  NetConfig cfg;
  cfg.hidden = {4};
  const MlpNet net = MlpNet::init(cfg, 1);
  Rng rng(0);
  FieldInput in = random_input(rng, 2, 3);
  in.t = Vec::Zero(2);
  EXPECT_THROW(net.evaluate(in), ShapeError);
  EXPECT_THROW(net.evaluate(random_input(rng, 3, 3)), ShapeError);
}

TEST(MlpNet, ZeroTangentGivesZeroDerivative) {
  const MlpNet net = MlpNet::init(NetConfig{}, 5);
  Rng rng(1);
  const FieldInput in = random_input(rng, 2, 6);
  const JvpResult jr = net.jvp(in, FieldTangent::zeros_like(in));
  EXPECT_EQ(jr.du.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(jr.u, net.evaluate(in));
}

TEST(MlpNet, DefaultArchitectureJvpMatchesFiniteDifference) {
  const MlpNet net = MlpNet::init(NetConfig{}, 9);
  Rng rng(2);
  const FieldInput in = random_input(rng, 2, 8);
  const FieldTangent tan = FieldTangent::along_s(standard_normal(rng, 2, 8));
  const JvpResult jr = net.jvp(in, tan);
  constexpr double h = 1e-4;
  FieldInput up = in, down = in;
  up.z += h * tan.dz;
  up.s += h * tan.ds;
  down.z -= h * tan.dz;
  down.s -= h * tan.ds;
  const Batch fd = (net.evaluate(up) - net.evaluate(down)) / (2.0 * h);
  EXPECT_LT((fd - jr.du).norm() / jr.du.norm(), 1e-6);
}

TEST(MlpNet, InputGradientMatchesFiniteDifference) {
  NetConfig cfg;
  cfg.hidden = {12, 12};
  cfg.embed_dim = 8;
  const MlpNet net = MlpNet::init(cfg, 3);
  Rng rng(4);
  const FieldInput in = random_input(rng, 2, 3);
  const Batch w = standard_normal(rng, 2, 3);
  const InputGradient g = net.input_gradient(in, w);
  constexpr double h = 1e-5;
  auto loss = [&](const FieldInput& x) { return (w.array() * net.evaluate(x).array()).sum(); };
  for (Eigen::Index j = 0; j < 3; ++j) {
    FieldInput a = in, b = in;
    a.t(j) += h;
    b.t(j) -= h;
    EXPECT_NEAR((loss(a) - loss(b)) / (2 * h), g.dt(j), 1e-7);
    a = in;
    b = in;
    a.r(j) += h;
    b.r(j) -= h;
    EXPECT_NEAR((loss(a) - loss(b)) / (2 * h), g.dr(j), 1e-7);
    a = in;
    b = in;
    a.x(1, j) += h;
    b.x(1, j) -= h;
    EXPECT_NEAR((loss(a) - loss(b)) / (2 * h), g.dx(1, j), 1e-7);
  }
}

TEST(MlpNet, JvpAndVjpAgreeOnTimeTangents) {
  NetConfig cfg;
  cfg.hidden = {8};
  const MlpNet net = MlpNet::init(cfg, 8);
  Rng rng(5);
  const FieldInput in = random_input(rng, 2, 4);
  const Batch w = standard_normal(rng, 2, 4);
  const InputGradient g = net.input_gradient(in, w);
  FieldTangent tan = FieldTangent::zeros_like(in);
  tan.dr.setOnes();
  tan.ds.setOnes();
  const JvpResult jr = net.jvp(in, tan);
  EXPECT_NEAR((w.array() * jr.du.array()).sum(), g.dr.sum() + g.ds.sum(), 1e-10);
}

TEST(FdSuite, RandomNetworksPass) {
  const FdReport report = jvp_fd_suite(20, 1e-6, 123);
  EXPECT_TRUE(report.passed) << "jvp " << report.max_jvp_rel_err << " grad " << report.max_grad_rel_err << " vjp "
                             << report.max_vjp_rel_err;
  EXPECT_EQ(report.max_zero_tangent, 0.0);
}

TEST(CountingField, CountsEvaluations) {
  const MlpNet net = MlpNet::init(NetConfig{}, 1);
  const CountingField counter(net);
  Rng rng(0);
  const FieldInput in = random_input(rng, 2, 3);
  counter.evaluate(in);
  counter.jvp(in, FieldTangent::zeros_like(in));
  EXPECT_EQ(counter.count(), 2u);
}

TEST(GradBuffer, Arithmetic) {
  GradBuffer a{{1.0, 2.0}};
  GradBuffer b{{3.0, -1.0}};
  EXPECT_DOUBLE_EQ(a.dot(b), 1.0);
  a += b;
  a *= 0.5;
  EXPECT_DOUBLE_EQ(a.values[0], 2.0);
  EXPECT_DOUBLE_EQ(a.values[1], 0.5);
  EXPECT_DOUBLE_EQ((GradBuffer{{3.0, 4.0}}.norm()), 5.0);
}

}  // namespace
}  // namespace stmd
