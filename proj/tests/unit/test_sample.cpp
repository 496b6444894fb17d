#include "stmd/eval.hpp"
#include "stmd/oracles.hpp"
#include "stmd/sample.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace stmd {
namespace {

Vec test_mean() {
  Vec m(2);
  m << 1.0, -0.5;
  return m;
}

TEST(SamplerSpec, Validation) {
  SamplerSpec spec;
  EXPECT_EQ(spec.nfe(), 8);
  spec.n_inf = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.n_inf = 1;
  spec.n_mf = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(SamplerForNfe, Mapping) {
  const std::pair<int, int> expected[] = {{1, 1}, {2, 1}, {2, 2}, {4, 2}};
  const int budgets[] = {1, 2, 4, 8};
  for (int i = 0; i < 4; ++i) {
    const SamplerSpec spec = sampler_for_nfe(budgets[i], 5);
    EXPECT_EQ(spec.n_inf, expected[i].first);
    EXPECT_EQ(spec.n_mf, expected[i].second);
    EXPECT_EQ(spec.nfe(), budgets[i]);
    EXPECT_EQ(spec.seed, 5u);
  }
  EXPECT_EQ(sampler_for_nfe(3, 0).nfe(), 3);
  EXPECT_THROW(sampler_for_nfe(0, 0), ConfigError);
}

TEST(SampleTrained, EvaluationCountPerObjective) {
  const ZeroField zero(2);
  for (Objective o : {Objective::stmd, Objective::meanflow, Objective::cfm, Objective::ddpm}) {
    const CountingField counter(zero);
    sample_trained(counter, o, NoiseSchedule{}, SamplerSpec{4, 2, 1}, 5);
    EXPECT_EQ(counter.count(), 8u) << to_string(o);
  }
}

TEST(StmdSample, NetworkEvaluationCount) {
  const ZeroField zero(2);
  const NoiseSchedule sched;
  for (auto [a, b] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{2, 2}, std::pair{4, 2}, std::pair{3, 5}}) {
    const CountingField counter(zero);
    SamplerSpec spec{a, b, 0};
    stmd_sample(counter, sched, spec, 7);
    EXPECT_EQ(counter.count(), static_cast<std::size_t>(a * b));
  }
}

TEST(StmdSample, SeededReproducibility) {
  const NoiseSchedule sched;
  const GaussianPosteriorField field(sched, test_mean(), 0.5);
  SamplerSpec spec{3, 2, 17};
  const Batch a = stmd_sample(field, sched, spec, 64);
  const Batch b = stmd_sample(field, sched, spec, 64);
  EXPECT_EQ(a, b);
  spec.seed = 18;
  EXPECT_NE(a, stmd_sample(field, sched, spec, 64));
}

// With the exact posterior mean velocity every sampler configuration is exact.
TEST(StmdSample, ExactFieldRecoversData) {
  const NoiseSchedule sched;
  const GaussianPosteriorField field(sched, test_mean(), 0.5);
  const DatasetSpec data = DatasetSpec::gaussian(2, 0.5, test_mean());
  Rng rng(5);
  const Batch truth = sample_dataset(data, 2048, rng);
  for (auto [a, b] : {std::pair{1, 1}, std::pair{4, 2}}) {
    const Batch x = stmd_sample(field, sched, SamplerSpec{a, b, 3}, 2048);
    EXPECT_LT(w2_exact(x, truth).value, 0.05) << a << "," << b;
    EXPECT_LT(w2_gaussian_fit(x, test_mean(), 0.5).value, 0.01) << a << "," << b;
  }
}

TEST(StmdSample, IntermediateMarginalsArePreserved) {
  const NoiseSchedule sched;
  const double scale = 0.5;
  const GaussianPosteriorField field(sched, test_mean(), scale);
  const Eigen::Index n = 20000;
  int calls = 0;
  const StepObserver observer = [&](int k, double t, const Batch& xt) {
    EXPECT_EQ(k, calls++);
    const AlphaSigma as = alpha_sigma(sched, t);
    const test::Moments m = test::moments(xt);
    const Vec mean = as.alpha * test_mean();
    const double var = as.alpha_sq * scale * scale + as.sigma_sq;
    for (int i = 0; i < 2; ++i) {
      EXPECT_LE(std::abs(m.mean(i) - mean(i)), 4.0 * m.mean_se(i)) << "t=" << t;
      EXPECT_LE(std::abs(m.var(i) - var), 4.0 * m.var_se(i)) << "t=" << t;
    }
  };
  stmd_sample(field, sched, SamplerSpec{4, 2, 11}, n, observer);
  EXPECT_EQ(calls, 4);
}

TEST(StmdSample, NonFiniteOutputThrows) {
  class NanField : public ConditionalField {
   public:
    Eigen::Index dim() const override { return 2; }
    Batch evaluate(const FieldInput& in) const override {
      return Batch::Constant(2, in.size(), std::numeric_limits<double>::quiet_NaN());
    }
  };
  EXPECT_THROW(stmd_sample(NanField{}, NoiseSchedule{}, SamplerSpec{}, 4), NumericError);
  EXPECT_THROW(meanflow_sample(NanField{}, 1, 4, 0), NumericError);
}

TEST(DdpmSample, ExactNoisePredictorApproximatesData) {
  const NoiseSchedule sched;
  const GaussianEpsField eps(sched, test_mean(), 0.5);
  const Batch x = ddpm_sample(eps, sched, 1000, 20000, 2);
  const test::Moments m = test::moments(x);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LE(std::abs(m.mean(i) - test_mean()(i)), 4.0 * m.mean_se(i) + 0.01);
    EXPECT_LT(std::abs(m.var(i) / 0.25 - 1.0), 0.05);
  }
}

TEST(FmEulerSample, ConvergesToExactFlowMap) {
  const GaussianFlow flow{test_mean(), 0.5};
  const GaussianVelocityField v(flow);
  const Batch x = fm_euler_sample(v, 500, 256, 4);
  Rng rng(4);
  const Batch z1 = standard_normal(rng, 2, 256);
  const Batch exact = flow.flow_map(0.0, 1.0, z1);
  EXPECT_LT((x - exact).cwiseAbs().maxCoeff(), 0.02);
  // Euler is first order: halving the step halves the error.
  const double e500 = (x - exact).cwiseAbs().maxCoeff();
  const double e1000 = (fm_euler_sample(v, 1000, 256, 4) - exact).cwiseAbs().maxCoeff();
  EXPECT_NEAR(e500 / e1000, 2.0, 0.2);
}

TEST(MeanflowSample, ExactFieldOneStepIsFlowMap) {
  const GaussianFlow flow{test_mean(), 0.5};
  const GaussianMeanFlowField u(flow);
  Rng rng(6);
  const Batch z1 = standard_normal(rng, 2, 100);
  for (int steps : {1, 3}) {
    EXPECT_LT((meanflow_sample(u, steps, 100, 6) - flow.flow_map(0.0, 1.0, z1)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(LinearObservation, ProjectionAndErrors) {
  Eigen::MatrixXd mask(1, 2);
  mask << 1.0, 0.0;
  const LinearObservation obs(mask, Vec::Constant(1, 0.7));
  Batch x(2, 2);
  x << 1.0, 2.0, 3.0, 4.0;
  const Batch p = obs.project(x);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.7);
  EXPECT_DOUBLE_EQ(p(1, 1), 4.0);
  EXPECT_EQ(obs.residual_inf(p), 0.0);

  Eigen::MatrixXd dup(2, 2);
  dup << 1.0, 1.0, 2.0, 2.0;
  EXPECT_THROW(LinearObservation(dup, Vec::Zero(2)), ConfigError);
  EXPECT_THROW(LinearObservation(mask, Vec::Zero(2)), ConfigError);
  EXPECT_THROW(LinearObservation(Eigen::MatrixXd(0, 2), Vec()), ConfigError);
}

TEST(StmdInpaint, FullObservationReturnsObservation) {
  const NoiseSchedule sched;
  const GaussianPosteriorField field(sched, test_mean(), 0.5);
  Vec y(2);
  y << 0.3, -0.2;
  const LinearObservation obs(Eigen::MatrixXd::Identity(2, 2), y);
  const Batch x = stmd_inpaint(field, sched, SamplerSpec{2, 2, 1}, obs, 16);
  EXPECT_LT((x.colwise() - y).cwiseAbs().maxCoeff(), 1e-12);
}

// Components differ only in the second coordinate, so the first coordinate is independent of the
// second and conditioning on it leaves the bimodal second marginal unchanged.
TEST(StmdInpaint, BimodalConditionalWithExactMixtureField) {
  IsoGmm prior;
  prior.weights = {0.5, 0.5};
  Vec up(2), down(2);
  up << 0.0, 1.5;
  down << 0.0, -1.5;
  prior.means = {up, down};
  prior.scales = {0.3, 0.3};
  const NoiseSchedule sched;
  const MixturePosteriorField field(sched, prior, 50);
  Eigen::MatrixXd mask(1, 2);
  mask << 1.0, 0.0;
  const LinearObservation obs(mask, Vec::Zero(1));
  const Eigen::Index n = 1000;
  const Batch x = stmd_inpaint(field, sched, SamplerSpec{4, 2, 9}, obs, n);
  EXPECT_LT(obs.residual_inf(x), 1e-12);

  Rng rng(10);
  Batch ref = sample_mixture(prior, n, rng);
  ref.row(0).setZero();
  const double ed = energy_distance(x, ref);
  Batch unimodal = ref;
  unimodal.row(1) = std::sqrt(1.5 * 1.5 + 0.09) * standard_normal(rng, 1, n);
  EXPECT_LT(ed, 0.02);
  EXPECT_GT(energy_distance(unimodal, ref), 5.0 * std::max(ed, 0.005));

  const double upper = (x.row(1).array() > 0.0).cast<double>().mean();
  EXPECT_LE(std::abs(upper - 0.5), 4.0 * std::sqrt(0.25 / n));
}

}  // namespace
}  // namespace stmd
