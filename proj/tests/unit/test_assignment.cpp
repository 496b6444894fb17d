#include "stmd/assignment.hpp"
#include "stmd/common.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace stmd {
namespace {

double brute_force(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// O(n^3) Hungarian algorithm with potentials (e-maxx formulation), 1-based internally.
double hungarian(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += a(p[j] - 1, j - 1);
  return total;
}

void expect_permutation(const Assignment& a, int n) {
  ASSERT_EQ(static_cast<int>(a.row_to_col.size()), n);
  std::vector<int> sorted = a.row_to_col;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Assignment, TrivialSizes) {
  EXPECT_TRUE(solve_assignment(Eigen::MatrixXd(0, 0)).row_to_col.empty());
  Eigen::MatrixXd one(1, 1);
  one << 3.5;
  EXPECT_EQ(solve_assignment(one).cost, 3.5);
  EXPECT_THROW(solve_assignment(Eigen::MatrixXd::Zero(2, 3)), ShapeError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(solve_assignment(bad), NumericError);
}

TEST(Assignment, MatchesBruteForceOnSmallInstances) {
  Rng rng(77);
  std::uniform_int_distribution<int> size(2, 7);
  std::uniform_int_distribution<int> small_int(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng);
    Eigen::MatrixXd cost(n, n);
    const bool ties = trial % 3 == 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) cost(i, j) = ties ? small_int(rng) : standard_normal(rng, 1, 1)(0, 0);
    }
    const Assignment a = solve_assignment(cost);
    expect_permutation(a, n);
    EXPECT_NEAR(a.cost, brute_force(cost), 1e-12) << "trial " << trial;
  }
}

TEST(Assignment, MatchesHungarianOnLargerInstances) {
  Rng rng(5);
  std::uniform_int_distribution<int> small_int(0, 5);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 20 + 15 * (trial % 8);
    Eigen::MatrixXd cost(n, n);
    if (trial % 2 == 0) {
      const Batch a = standard_normal(rng, 2, n);
      const Batch b = standard_normal(rng, 2, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) cost(i, j) = (a.col(i) - b.col(j)).squaredNorm();
      }
    } else {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) cost(i, j) = small_int(rng);
      }
    }
    const Assignment a = solve_assignment(cost);
    expect_permutation(a, n);
    const double ref = hungarian(cost);
    EXPECT_NEAR(a.cost, ref, 1e-9 * std::max(1.0, std::abs(ref))) << "trial " << trial << " n " << n;
  }
}

TEST(Assignment, IdentityIsOptimalForZeroDiagonal) {
  Rng rng(1);
  const int n = 64;
  const Batch pts = standard_normal(rng, 3, n);
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost(i, j) = (pts.col(i) - pts.col(j)).squaredNorm();
  }
  EXPECT_EQ(solve_assignment(cost).cost, 0.0);
}

TEST(Assignment, ConstantAndOffsetCosts) {
  const int n = 30;
  const Assignment flat = solve_assignment(Eigen::MatrixXd::Constant(n, n, 2.5));
  expect_permutation(flat, n);
  EXPECT_DOUBLE_EQ(flat.cost, 2.5 * n);

  Rng rng(8);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(n, n, 1e6) + standard_normal(rng, n, n);
  const Assignment shifted = solve_assignment(cost);
  expect_permutation(shifted, n);
  EXPECT_NEAR(shifted.cost, hungarian(cost), 1e-6);
}

}  // namespace
}  // namespace stmd
