#pragma once

#include "stmd/common.hpp"
#include "stmd/data.hpp"
#include "stmd/network.hpp"
#include "stmd/schedule.hpp"

#include <functional>
#include <string>

namespace stmd {

struct W2Report {
  enum class Method { exact_assignment, gaussian_closed_form };

  double value = 0.0;  // squared 2-Wasserstein distance
  Eigen::Index n = 0;
  Method method = Method::exact_assignment;
};

const char* to_string(W2Report::Method method);

constexpr Eigen::Index kMaxAssignmentSize = 4096;

/// Exact W2^2 between two uniform empirical measures of equal size (optimal assignment on
/// squared Euclidean costs). Throws ShapeError on size mismatch and CapacityError for n > 4096.
W2Report w2_exact(const Batch& a, const Batch& b);

/// W2^2 between N(m1, s1^2 I) and N(m2, s2^2 I).
double w2_gaussian(const Vec& m1, double s1, const Vec& m2, double s2);

/// W2^2 between N(sample mean, sample covariance) of `samples` and N(mean, scale^2 I).
W2Report w2_gaussian_fit(const Batch& samples, const Vec& mean, double scale);

/// Energy distance 2E|a-b| - E|a-a'| - E|b-b'| with U-statistics for the within-set terms.
double energy_distance(const Batch& a, const Batch& b);

using BatchSampler = std::function<Batch(Eigen::Index n, Rng& rng)>;

struct W2Estimate {
  double value = 0.0;      // debiased estimate, averaged over replicates
  double std_error = 0.0;  // across replicates
  double raw = 0.0;        // mean of plain W2^2(A, B)
  double raw_std_error = 0.0;
  int replicates = 0;
  Eigen::Index n = 0;
};

/// Debiased W2^2 from independent replicates: W(A, B) - (W(A, A') + W(B, B')) / 2, which removes
/// the leading finite-sample bias of the plug-in estimator.
W2Estimate w2_debiased(const BatchSampler& model, const BatchSampler& data, Eigen::Index n,
                       int replicates, std::uint64_t seed);

struct EpsilonConfig {
  int grid = 64;     // midpoint nodes in s on (0, 1)
  int draws = 4096;  // samples per node
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpsilonEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Vec per_node;
};

using VelocityOracle = std::function<Batch(double s, const Batch& z)>;

/// E_s E_{z_s} || u(z_s, 0, s) - (v_s(z_s) - s d/ds u) || ^2 with the marginal velocity as tangent.
EpsilonEstimate estimate_epsilon(const ConditionalField& model, const VelocityOracle& velocity,
                                 const DatasetSpec& data, const EpsilonConfig& cfg);

/// E_s E_{x_t} gamma(0, s, t, x_t) for mixture data at a fixed diffusion time t, using the exact
/// posterior velocity v_s(z | x_t, t).
EpsilonEstimate estimate_conditional_epsilon(const ConditionalField& model, const IsoGmm& data,
                                             const NoiseSchedule& sched, double t,
                                             const EpsilonConfig& cfg);

/// E_s gamma(0, s, t, x_t) at one conditioning point.
EpsilonEstimate estimate_gamma(const ConditionalField& model, const IsoGmm& data, const NoiseSchedule& sched,
                               double t, const Vec& xt, const EpsilonConfig& cfg);

struct LipschitzConfig {
  int pairs = 1024;  // half independent N(0, I) pairs, half local perturbations
  int draws = 256;   // z1 draws per pair
  double local_scale = 0.05;
  std::uint64_t seed = 0;
};

struct LipschitzEstimate {
  double value = 0.0;  // max ratio over all pairs; a lower bound on the true constant
  double global_max = 0.0;
  double local_max = 0.0;
};

/// sqrt of max over pairs of E_z1 ||u(z1,0,1,x1,1) - u(z1,0,1,x1',1)||^2 / ||x1 - x1'||^2.
LipschitzEstimate lipschitz_probe(const ConditionalField& model, const LipschitzConfig& cfg);

struct BoundReport {
  std::string name;
  double epsilon_hat = 0.0;
  double epsilon_se = 0.0;
  double w2_sq = 0.0;  // debiased estimate clamped at 0
  double w2_se = 0.0;
  double w2_raw = 0.0;
  double w2_gaussian = 0.0;  // Gaussian-fit closed form, when the target is Gaussian
  double bound_rhs = 0.0;
  double bound_rhs_safe = 0.0;  // with 2x the probed Lipschitz constant
  double lipschitz = 0.0;
  double m2 = 0.0;
  double alpha1 = 0.0;
  double sigma1 = 0.0;
  double combined_se = 0.0;
  double slack = 0.0;  // bound_rhs - w2_sq
  bool satisfied = false;  // w2_sq <= bound_rhs + 3 combined_se
};

std::string bound_report_csv_header();
std::string to_csv_row(const BoundReport& report);
std::string to_text(const BoundReport& report);

struct BoundCheckConfig {
  Eigen::Index n = 2048;
  int replicates = 4;
  EpsilonConfig epsilon;
  LipschitzConfig lipschitz;
  std::uint64_t seed = 0;
};

/// One-step unconditional mean-flow samples z1 - u(z1, 0, 1) against Gaussian data:
/// W2^2 <= e * eps.
BoundReport check_theorem1(const ConditionalField& model, const DatasetSpec& gaussian_data,
                           const BoundCheckConfig& cfg);

/// Conditional one-step samples at a fixed (t, x_t) against the exact Gaussian posterior:
/// W2^2 <= e * E_s gamma(0, s, t, x_t).
BoundReport check_corollary1(const ConditionalField& model, const NoiseSchedule& sched,
                             const DatasetSpec& gaussian_data, double t, const Vec& xt,
                             const BoundCheckConfig& cfg);

/// Single outer step samples from x1 ~ N(0, I) against data:
/// W2^2 <= 2 (L^2 (alpha_1^2 m2 + (1 - sigma_1)^2 d) + e eps_1).
BoundReport check_corollary2(const ConditionalField& model, const NoiseSchedule& sched,
                             const DatasetSpec& mixture_data, const BoundCheckConfig& cfg);

/// Largest alpha_1 with alpha_1^2 m2 + alpha_1^4 d <= eps1.
double alpha1_threshold(double m2, int d, double eps1);

struct FdReport {
  int nets = 0;
  double max_jvp_rel_err = 0.0;
  double max_grad_rel_err = 0.0;
  double max_vjp_rel_err = 0.0;
  double max_zero_tangent = 0.0;  // |du| for a zero tangent, must be exactly 0
  bool passed = false;
};

/// Central-difference checks (step 1e-4) of forward-mode JVPs and reverse-mode parameter
/// gradients over `net_count` random architectures and inputs.
FdReport jvp_fd_suite(int net_count, double tol, std::uint64_t seed);

}  // namespace stmd
