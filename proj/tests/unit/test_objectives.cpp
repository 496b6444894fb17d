#include "stmd/objectives.hpp"
#include "stmd/oracles.hpp"
#include "stmd/schedule.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace stmd {
namespace {

TEST(SampleRs, OrderedAndInUnitInterval) {
  Rng rng(0);
  RsSamplerConfig cfg;
  int equal = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto [r, s] = sample_rs(rng, cfg);
    ASSERT_LE(r, s);
    ASSERT_GE(r, 0.0);
    ASSERT_LE(s, 1.0);
    equal += (r == s);
  }
  const double p = cfg.p_equal;
  EXPECT_LE(std::abs(equal / static_cast<double>(n) - p), 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(SampleRs, AlwaysEqualWhenRequested) {
  Rng rng(1);
  RsSamplerConfig cfg;
  cfg.p_equal = 1.0;
  for (int i = 0; i < 1000; ++i) {
    const auto [r, s] = sample_rs(rng, cfg);
    ASSERT_EQ(r, s);
  }
}

TEST(SampleRs, Validation) {
  RsSamplerConfig cfg;
  cfg.sigma = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.sigma = 1.0;
  cfg.p_equal = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AdaptiveWeight, Examples) {
  EXPECT_NEAR(adaptive_weight(0.99, 0.01, 1.0), 1.0, 1e-15);
  EXPECT_EQ(adaptive_weight(123.0, 0.01, 0.0), 1.0);
  EXPECT_NEAR(adaptive_weight(0.0, 0.01, 1.0), 100.0, 1e-12);
  EXPECT_NEAR(adaptive_weight(3.0, 1.0, 0.5), 0.5, 1e-15);
  EXPECT_THROW(adaptive_weight(1.0, 0.0, 1.0), ConfigError);
  EXPECT_THROW(adaptive_weight(-1.0, 0.01, 1.0), DomainError);
}

TEST(CfmResidual, ShapesAndValue) {
  Batch v = Batch::Ones(2, 3);
  Batch z0 = Batch::Zero(2, 3);
  Batch z1 = Batch::Constant(2, 3, 0.25);
  EXPECT_LT((cfm_residual(v, z0, z1) - Batch::Constant(2, 3, 0.75)).norm(), 1e-15);
  EXPECT_THROW(cfm_residual(v, z0, Batch::Zero(2, 2)), ShapeError);
}

// The exact velocity makes the residual orthogonal to every function of z_s, here z_s itself.
TEST(CfmResidual, ExactVelocityIsUncorrelatedWithState) {
  const double sigma0 = 2.0;
  Rng rng(3);
  const Eigen::Index n = 400000;
  for (double s : {0.3, 0.7}) {
    const Batch z0 = sigma0 * standard_normal(rng, 1, n);
    const Batch z1 = standard_normal(rng, 1, n);
    const Batch zs = (1 - s) * z0 + s * z1;
    const Batch res = cfm_residual(gauss_velocity(sigma0, s, zs), z0, z1);
    const Eigen::ArrayXd prod = (res.array() * zs.array()).row(0).transpose();
    const double mean = prod.mean();
    const double se = std::sqrt((prod - mean).square().sum() / (n - 1.0) / n);
    EXPECT_LE(std::abs(mean), 3.0 * se) << "s=" << s;
  }
}

TEST(MeanFlowResidual, ZeroFieldResidualIsMinusVelocity) {
  Rng rng(4);
  const ZeroField zero(2);
  const Batch z0 = standard_normal(rng, 2, 6);
  const Batch z1 = standard_normal(rng, 2, 6);
  const Vec r = 0.3 * uniform_vec(rng, 6);
  const Vec s = (r.array() + 0.5).matrix();
  const Batch zs = z0 * (1 - s.array()).matrix().asDiagonal();
  const MeanFlowResidual res = mf_target_and_residual(zero, zs, r, s, z0, z1);
  EXPECT_LT((res.delta + (z1 - z0)).norm(), 1e-15);
  EXPECT_LT((res.target - (z1 - z0)).norm(), 1e-15);
}

// For the exact mean velocity, delta = g (v_s(z_s) - (z1 - z0)) with g = sqrt(D(r)/D(s)).
TEST(MeanFlowResidual, ExactFieldPointwiseIdentity) {
  Vec mean(2);
  mean << 0.5, -1.0;
  const GaussianFlow flow{mean, 1.6};
  const GaussianMeanFlowField field(flow);
  Rng rng(5);
  const Eigen::Index n = 32;
  const Batch z0 = (1.6 * standard_normal(rng, 2, n)).colwise() + mean;
  const Batch z1 = standard_normal(rng, 2, n);
  Vec r(n), s(n);
  RsSamplerConfig cfg;
  for (Eigen::Index j = 0; j < n; ++j) std::tie(r(j), s(j)) = sample_rs(rng, cfg);
  Batch zs(2, n);
  for (Eigen::Index j = 0; j < n; ++j) zs.col(j) = (1 - s(j)) * z0.col(j) + s(j) * z1.col(j);
  const MeanFlowResidual res = mf_target_and_residual(field, zs, r, s, z0, z1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double g = std::sqrt(flow.spread(r(j)) / flow.spread(s(j)));
    const Vec expected = g * (flow.velocity(s(j), zs.col(j)) - (z1.col(j) - z0.col(j)));
    EXPECT_LT((res.delta.col(j) - expected).norm(), 1e-6 * (1.0 + expected.norm())) << "j=" << j;
    if (r(j) == s(j)) {
      EXPECT_LT((res.target.col(j) - (z1.col(j) - z0.col(j))).norm(), 1e-15);
    }
  }
}

TEST(MeanFlowResidual, ConditionalExactFieldPointwiseIdentity) {
  Vec mean(2);
  mean << 1.0, 0.0;
  const NoiseSchedule sched;
  const GaussianPosteriorField field(sched, mean, 0.7);
  Rng rng(6);
  const Eigen::Index n = 24;
  const Batch x0 = (0.7 * standard_normal(rng, 2, n)).colwise() + mean;
  const Vec t = (0.05 + 0.9 * uniform_vec(rng, n).array()).matrix();
  const Batch xt = perturb(sched, x0, t, standard_normal(rng, 2, n));
  const Batch z1 = standard_normal(rng, 2, n);
  // z0 drawn from the posterior so (z0, z1) is a valid coupling for the per-sample flow.
  Batch z0(2, n), zs(2, n);
  Vec r(n), s(n);
  RsSamplerConfig cfg;
  for (Eigen::Index j = 0; j < n; ++j) {
    const GaussianFlow post = field.posterior(t(j), xt.col(j));
    z0.col(j) = post.mean + post.scale * standard_normal(rng, 2, 1).col(0);
    std::tie(r(j), s(j)) = sample_rs(rng, cfg);
    zs.col(j) = (1 - s(j)) * z0.col(j) + s(j) * z1.col(j);
  }
  const MeanFlowResidual res = dcmf_target_and_residual(field, zs, r, s, xt, t, z0, z1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const GaussianFlow post = field.posterior(t(j), xt.col(j));
    const double g = std::sqrt(post.spread(r(j)) / post.spread(s(j)));
    const Vec expected = g * (post.velocity(s(j), zs.col(j)) - (z1.col(j) - z0.col(j)));
    EXPECT_LT((res.delta.col(j) - expected).norm(), 1e-6 * (1.0 + expected.norm())) << "j=" << j;
  }
}

// With r = s the mean squared residual of the exact field equals E||v_s(z_s) - (z1 - z0)||^2.
TEST(MeanFlowResidual, DiagonalFloorMatchesConditionalVariance) {
  const double tau = 2.0, s = 0.6;
  const GaussianFlow flow{Vec::Zero(1), tau};
  const GaussianMeanFlowField field(flow);
  Rng rng(7);
  const Eigen::Index n = 200000;
  const Batch z0 = tau * standard_normal(rng, 1, n);
  const Batch z1 = standard_normal(rng, 1, n);
  const Batch zs = (1 - s) * z0 + s * z1;
  const Vec sv = Vec::Constant(n, s);
  const MeanFlowResidual res = mf_target_and_residual(field, zs, sv, sv, z0, z1);
  const Eigen::ArrayXd sq = res.delta.colwise().squaredNorm().transpose().array();
  // Var(z1 - z0) - Cov(z1 - z0, z_s)^2 / Var(z_s).
  const double var_v = 1 + tau * tau;
  const double cov = s - (1 - s) * tau * tau;
  const double expected = var_v - cov * cov / flow.spread(s);
  const double se = std::sqrt((sq - sq.mean()).square().sum() / (n - 1.0) / n);
  EXPECT_LE(std::abs(sq.mean() - expected), 3.0 * se);
}

TEST(WeightedLoss, UpstreamMatchesFiniteDifferences) {
  Rng rng(8);
  const Batch delta = standard_normal(rng, 2, 5);
  for (bool per_sample : {false, true}) {
    WeightingConfig cfg;
    cfg.p = 0.75;
    cfg.per_sample = per_sample;
    Batch upstream;
    const LossBreakdown lb = weighted_loss(delta, cfg, &upstream);
    EXPECT_NEAR(lb.raw_loss, delta.colwise().squaredNorm().mean(), 1e-14);
    // The weights are held fixed, as they are under stop-gradient.
    Vec w(5);
    for (Eigen::Index j = 0; j < 5; ++j) {
      w(j) = adaptive_weight(per_sample ? lb.per_sample(j) : lb.mean_delta_sq, cfg.c, cfg.p);
    }
    const auto frozen = [&](const Batch& d) { return w.dot(d.colwise().squaredNorm().transpose()) / 5.0; };
    EXPECT_NEAR(frozen(delta), lb.weighted_loss, 1e-14);
    constexpr double h = 1e-6;
    for (Eigen::Index j = 0; j < 5; ++j) {
      for (Eigen::Index i = 0; i < 2; ++i) {
        Batch plus = delta, minus = delta;
        plus(i, j) += h;
        minus(i, j) -= h;
        EXPECT_NEAR(upstream(i, j), (frozen(plus) - frozen(minus)) / (2 * h), 1e-8);
      }
    }
  }
}

TEST(WeightedLoss, PlainMseWhenPowerIsZero) {
  WeightingConfig cfg;
  cfg.p = 0.0;
  const Batch delta = Batch::Constant(3, 4, 2.0);
  const LossBreakdown lb = weighted_loss(delta, cfg, nullptr);
  EXPECT_DOUBLE_EQ(lb.weighted_loss, 12.0);
  EXPECT_DOUBLE_EQ(lb.raw_loss, 12.0);
  EXPECT_THROW(weighted_loss(Batch(2, 0), cfg, nullptr), ShapeError);
}

TEST(InputConventions, Layout) {
  const Batch z = Batch::Ones(2, 3);
  const Vec s = Vec::Constant(3, 0.4);
  const FieldInput v = velocity_input(z, s);
  EXPECT_EQ(v.r, s);
  EXPECT_EQ(v.s, s);
  EXPECT_EQ(v.x, Batch::Zero(2, 3));
  EXPECT_EQ(v.t, Vec::Zero(3));
  const FieldInput e = epsilon_input(z, s);
  EXPECT_EQ(e.z, z);
  EXPECT_EQ(e.r, Vec::Zero(3));
  EXPECT_EQ(e.s, Vec::Zero(3));
  EXPECT_EQ(e.t, s);
}

}  // namespace
}  // namespace stmd
