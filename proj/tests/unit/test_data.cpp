#include "stmd/data.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace stmd {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("stmd_test_" + name)).string();
}

TEST(Dataset, GaussianMoments) {
  const DatasetSpec spec = DatasetSpec::gaussian(2, 1.0);
  Rng rng(1);
  const Eigen::Index n = 200000;
  const Batch x = sample_dataset(spec, n, rng);
  const test::Moments m = test::moments(x);
  for (int i = 0; i < 2; ++i) EXPECT_LE(std::abs(m.mean(i)), 3.0 / std::sqrt(double(n)));
  const Vec sq = x.colwise().squaredNorm().transpose();
  const double m2 = sq.mean();
  const double se = std::sqrt((sq.array() - m2).square().sum() / (n - 1.0) / n);
  EXPECT_LE(std::abs(m2 - 2.0), 3.0 * se);
}

TEST(Dataset, SingleComponentGmmIsGaussian) {
  Vec mean(2);
  mean << 0.5, -1.0;
  const DatasetSpec g = DatasetSpec::gaussian(2, 0.7, mean);
  const DatasetSpec m = DatasetSpec::gmm(IsoGmm::gaussian(mean, 0.7));
  Rng a(9), b(9);
  EXPECT_EQ(sample_dataset(g, 100, a), sample_dataset(m, 100, b));
  EXPECT_DOUBLE_EQ(second_moment(g), second_moment(m));
}

TEST(Dataset, SeededDeterminism) {
  for (const DatasetSpec& spec : {DatasetSpec::ring(), DatasetSpec::two_moons(), DatasetSpec::checkerboard()}) {
    Rng a(5), b(5), c(6);
    const Batch xa = sample_dataset(spec, 50, a);
    EXPECT_EQ(xa, sample_dataset(spec, 50, b));
    EXPECT_NE(xa, sample_dataset(spec, 50, c));
  }
}

TEST(Dataset, Validation) {
  DatasetSpec spec = DatasetSpec::gaussian(2, 1.0);
  spec.mixture.scales[0] = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  IsoGmm bad = IsoGmm::ring(4, 1.0, 0.1);
  bad.weights[0] = 0.5;
  EXPECT_THROW(DatasetSpec::gmm(bad).validate(), ConfigError);
  DatasetSpec moons = DatasetSpec::two_moons();
  moons.dim = 3;
  EXPECT_THROW(moons.validate(), ConfigError);
  Rng rng(0);
  EXPECT_THROW(sample_dataset(DatasetSpec::gaussian(2, 1.0), 0, rng), ConfigError);
  EXPECT_THROW(dataset_kind_from_string("spiral"), ConfigError);
  EXPECT_EQ(dataset_kind_from_string("two_moons"), DatasetSpec::Kind::two_moons);
}

TEST(SecondMoment, ClosedForms) {
  EXPECT_DOUBLE_EQ(second_moment(DatasetSpec::gaussian(2, 1.0)), 2.0);
  IsoGmm two;
  two.weights = {0.5, 0.5};
  two.means = {Vec::Unit(2, 0), -Vec::Unit(2, 0)};
  two.scales = {0.0, 0.0};
  EXPECT_DOUBLE_EQ(second_moment(DatasetSpec::gmm(two)), 1.0);
}

double mc_second_moment_gap(const DatasetSpec& spec, std::uint64_t seed, double* se_out) {
  Rng rng(seed);
  const Eigen::Index n = 1000000;
  const Vec sq = sample_dataset(spec, n, rng).colwise().squaredNorm().transpose();
  const double mean = sq.mean();
  *se_out = std::sqrt((sq.array() - mean).square().sum() / (n - 1.0) / n);
  return mean - second_moment(spec);
}

TEST(SecondMoment, MatchesMonteCarlo) {
  IsoGmm g;
  g.weights = {0.2, 0.5, 0.3};
  g.means = {Vec::Constant(2, 1.0), Vec::Constant(2, -2.0), Vec::Unit(2, 1) * 3.0};
  g.scales = {0.3, 1.1, 0.05};
  std::uint64_t seed = 17;
  for (const DatasetSpec& spec :
       {DatasetSpec::gmm(g), DatasetSpec::ring(), DatasetSpec::two_moons(0.1), DatasetSpec::checkerboard(4, 2.0)}) {
    double se = 0.0;
    const double gap = mc_second_moment_gap(spec, seed++, &se);
    EXPECT_LE(std::abs(gap), 3.0 * se) << to_string(spec.kind);
  }
}

TEST(Checkerboard, PointsLieOnBlackCells) {
  const DatasetSpec spec = DatasetSpec::checkerboard(4, 2.0);
  Rng rng(3);
  const Batch x = sample_dataset(spec, 5000, rng);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const int ix = static_cast<int>(std::floor((x(0, j) + 2.0)));
    const int iy = static_cast<int>(std::floor((x(1, j) + 2.0)));
    EXPECT_EQ((ix + iy) % 2, 0);
  }
}

TEST(ConditionalGrid, SymmetricBimodal) {
  IsoGmm g;
  g.weights = {0.5, 0.5};
  g.means = {(Vec(2) << 0.0, 1.5).finished(), (Vec(2) << 0.0, -1.5).finished()};
  g.scales = {0.4, 0.4};
  const Vec grid = Vec::LinSpaced(801, -4.0, 4.0);
  const GridDensity cond = gmm_conditional_grid(DatasetSpec::gmm(g), 0, 0.0, grid);
  for (Eigen::Index i = 0; i < grid.size(); ++i) EXPECT_NEAR(cond.density(i), cond.density(grid.size() - 1 - i), 1e-12);
  EXPECT_LT(cond.density(400), 0.1 * cond.density(550));
  EXPECT_NEAR(cond.integral(), 1.0, 1e-6);
}

TEST(ConditionalGrid, SingleComponentIsTextbookGaussian) {
  Vec mean(2);
  mean << 0.3, -0.8;
  const double scale = 0.6;
  const Vec grid = Vec::LinSpaced(2001, -5.0, 5.0);
  const GridDensity cond = gmm_conditional_grid(DatasetSpec::gaussian(2, scale, mean), 0, 1.7, grid);
  // Isotropic: the unobserved coordinate stays N(mean_1, scale^2) whatever the observed value.
  double m1 = 0.0, m2 = 0.0;
  const double h = grid(1) - grid(0);
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    m1 += cond.density(i) * grid(i) * h;
    m2 += cond.density(i) * grid(i) * grid(i) * h;
  }
  EXPECT_NEAR(m1, -0.8, 1e-6);
  EXPECT_NEAR(m2 - m1 * m1, scale * scale, 1e-6);
  EXPECT_NEAR(cond.integral(), 1.0, 1e-6);
}

TEST(ConditionalGrid, SamplerMatchesDensity) {
  const Vec grid = Vec::LinSpaced(401, -4.0, 4.0);
  const GridDensity cond = gmm_conditional_grid(DatasetSpec::gaussian(2, 1.0), 1, 0.0, grid);
  Rng rng(8);
  const Vec draws = cond.sample(200000, rng);
  const double mean = draws.mean();
  const double var = (draws.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 3.0 / std::sqrt(200000.0));
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(ConditionalGrid, Errors) {
  const Vec grid = Vec::LinSpaced(11, -1.0, 1.0);
  EXPECT_THROW(gmm_conditional_grid(DatasetSpec::two_moons(), 0, 0.0, grid), ConfigError);
  EXPECT_THROW(gmm_conditional_grid(DatasetSpec::gaussian(3, 1.0), 0, 0.0, grid), ConfigError);
  EXPECT_THROW(gmm_conditional_grid(DatasetSpec::gaussian(2, 1.0), 2, 0.0, grid), ConfigError);
  EXPECT_THROW(gmm_conditional_grid(DatasetSpec::gaussian(2, 1.0), 0, 1e300, grid), NumericError);
}

TEST(Csv, RoundTripIsBitExact) {
  Rng rng(12);
  Batch x = standard_normal(rng, 3, 40) * 1e3;
  x(0, 0) = 1e-300;
  x(1, 0) = -0.1;
  const std::string path = temp_path("roundtrip.csv");
  write_points_csv(path, x);
  EXPECT_EQ(read_points_csv(path), x);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x0,x1,x2");
  std::remove(path.c_str());
}

TEST(Csv, MalformedInputIsRejected) {
  const std::string path = temp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "x0,x1\n1.0,2.0\n3.0,abc\n";
  }
  EXPECT_THROW(read_points_csv(path), FormatError);
  {
    std::ofstream out(path);
    out << "x0,x1\n1.0,2.0\n3.0\n";
  }
  EXPECT_THROW(read_points_csv(path), FormatError);
  EXPECT_THROW(read_points_csv(temp_path("missing.csv")), FormatError);
  std::remove(path.c_str());
}

TEST(Csv, DatasetResamplesRows) {
  const std::string path = temp_path("dataset.csv");
  Batch pts(2, 3);
  pts << 1, 2, 3, 4, 5, 6;
  write_points_csv(path, pts);
  DatasetSpec spec = DatasetSpec::csv(path);
  Rng rng(1);
  const Batch x = sample_dataset(spec, 30, rng);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    bool found = false;
    for (Eigen::Index k = 0; k < 3; ++k) found = found || x.col(j) == pts.col(k);
    EXPECT_TRUE(found);
  }
  EXPECT_NEAR(second_moment(spec), (1 + 16 + 4 + 25 + 9 + 36) / 3.0, 1e-12);
  std::remove(path.c_str());
}

}  // namespace
}  // namespace stmd
