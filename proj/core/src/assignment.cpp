#include "stmd/assignment.hpp"

#include "stmd/common.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <utility>

namespace stmd {

namespace {

constexpr double kLarge = std::numeric_limits<double>::infinity();

// Row-major copy so that a row scan is contiguous.
class Dense {
 public:
  explicit Dense(const Eigen::MatrixXd& cost) : n_(static_cast<int>(cost.rows())), data_(cost.size()) {
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) data_[static_cast<std::size_t>(i) * n_ + j] = cost(i, j);
    }
  }
  const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * n_; }

 private:
  int n_;
  std::vector<double> data_;
};

struct Solver {
  int n;
  const Dense& cost;
  std::vector<int> x;  // row -> col
  std::vector<int> y;  // col -> row
  std::vector<double> v;
  std::vector<int> free_rows;

  // Forward auction with epsilon scaling. It only supplies near-optimal duals v and a warm
  // matching; exactness comes from the shortest-path phase that follows.
  void auction() {
    double lo = kLarge;
    double hi = -kLarge;
    for (int i = 0; i < n; ++i) {
      const double* c = cost.row(i);
      for (int j = 0; j < n; ++j) {
        lo = std::min(lo, c[j]);
        hi = std::max(hi, c[j]);
      }
    }
    x.resize(n);
    y.resize(n);
    std::iota(x.begin(), x.end(), 0);
    std::iota(y.begin(), y.end(), 0);
    v.assign(n, 0.0);
    const double spread = hi - lo;
    if (!(spread > 0.0)) return;
    const double eps_final = spread * 1e-7;
    std::vector<double> price(n, 0.0);
    std::vector<int> queue;
    queue.reserve(n);
    for (double eps = spread / 4.0;; eps /= 6.0) {
      eps = std::max(eps, eps_final);
      x.assign(n, -1);
      y.assign(n, -1);
      queue.clear();
      for (int i = n - 1; i >= 0; --i) queue.push_back(i);
      while (!queue.empty()) {
        const int i = queue.back();
        queue.pop_back();
        const double* c = cost.row(i);
        int j1 = 0;
        double w1 = kLarge;
        double w2 = kLarge;
        for (int j = 0; j < n; ++j) {
          const double h = c[j] + price[j];
          if (h < w2) {
            if (h < w1) {
              w2 = w1;
              w1 = h;
              j1 = j;
            } else {
              w2 = h;
            }
          }
        }
        price[j1] += (w2 - w1) + eps;
        const int prev = y[j1];
        y[j1] = i;
        x[i] = j1;
        if (prev >= 0) {
          x[prev] = -1;
          queue.push_back(prev);
        }
      }
      if (eps <= eps_final) break;
    }
    for (int j = 0; j < n; ++j) v[j] = -price[j];
  }

  // Frees every row whose matched column is not an exact minimiser of c(i, j) - v(j).
  int unassign_loose() {
    free_rows.assign(n, 0);
    int n_free = 0;
    for (int i = 0; i < n; ++i) {
      const double* c = cost.row(i);
      double lowest = kLarge;
      for (int j = 0; j < n; ++j) lowest = std::min(lowest, c[j] - v[j]);
      const int j = x[i];
      if (c[j] - v[j] > lowest) {
        y[j] = -1;
        x[i] = -1;
        free_rows[n_free++] = i;
      }
    }
    return n_free;
  }

  // Dijkstra over columns on reduced costs c(i, j) - v(j), streaming each scanned row in
  // column order. Returns the free column that ends the path and updates the duals.
  int find_path(int start_i, std::vector<int>& pred, std::vector<double>& d, std::vector<char>& done,
                std::vector<int>& ready) {
    const double* c0 = cost.row(start_i);
    int best = -1;
    double best_d = kLarge;
    for (int j = 0; j < n; ++j) {
      d[j] = c0[j] - v[j];
      pred[j] = start_i;
      done[j] = 0;
      if (d[j] < best_d) {
        best_d = d[j];
        best = j;
      }
    }
    ready.clear();
    while (y[best] >= 0) {
      const int jb = best;
      const double mind = best_d;
      done[jb] = 1;
      ready.push_back(jb);
      const int i = y[jb];
      const double* c = cost.row(i);
      const double h = c[jb] - v[jb] - mind;
      best = -1;
      best_d = kLarge;
      for (int j = 0; j < n; ++j) {
        if (done[j]) continue;
        const double reduced = c[j] - v[j] - h;
        if (reduced < d[j]) {
          d[j] = reduced;
          pred[j] = i;
        }
        if (d[j] < best_d) {
          best_d = d[j];
          best = j;
        }
      }
    }
    for (const int j : ready) v[j] += d[j] - best_d;
    return best;
  }

  void augment(int n_free) {
    std::vector<int> pred(n);
    std::vector<double> d(n);
    std::vector<char> done(n);
    std::vector<int> ready;
    ready.reserve(n);
    for (int f = 0; f < n_free; ++f) {
      const int free_i = free_rows[f];
      int i = -1;
      int steps = 0;
      int j = find_path(free_i, pred, d, done, ready);
      while (i != free_i) {
        i = pred[j];
        y[j] = i;
        std::swap(j, x[i]);
        if (++steps > n) throw NumericError("solve_assignment: augmenting path did not terminate");
      }
    }
  }
};

}  // namespace

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  require_shape(cost.rows() == cost.cols(), "solve_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw NumericError("solve_assignment: non-finite cost");
  const int n = static_cast<int>(cost.rows());
  Assignment out;
  if (n == 0) return out;
  if (n == 1) {
    out.row_to_col = {0};
    out.cost = cost(0, 0);
    return out;
  }
  const Dense dense(cost);
  Solver solver{n, dense, {}, {}, {}, {}};
  solver.auction();
  const int n_free = solver.unassign_loose();
  if (n_free > 0) solver.augment(n_free);
  out.row_to_col = solver.x;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.row_to_col[i]);
  return out;
}

}  // namespace stmd
