#pragma once

#include <Eigen/Dense>

#include <vector>

namespace stmd {

struct Assignment {
  std::vector<int> row_to_col;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a dense square cost matrix. An epsilon-scaling auction
/// warm-starts the duals and shortest augmenting paths make the result exact.
/// Throws ShapeError for non-square input.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace stmd
