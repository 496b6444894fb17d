#pragma once

#include "stmd/common.hpp"
#include "stmd/network.hpp"
#include "stmd/schedule.hpp"
#include "stmd/train.hpp"

#include <functional>

namespace stmd {

struct SamplerSpec {
  int n_inf = 4;  // outer diffusion steps
  int n_mf = 2;   // inner mean-flow steps per outer step
  std::uint64_t seed = 0;

  void validate() const;
  int nfe() const { return n_inf * n_mf; }
};

/// Noiseless linear observation y = M x0 with M of full row rank.
class LinearObservation {
 public:
  /// Throws ConfigError when M M^T is singular or the sizes disagree.
  LinearObservation(Eigen::MatrixXd mask, Vec y);

  const Eigen::MatrixXd& mask() const { return mask_; }
  const Vec& y() const { return y_; }
  const Eigen::MatrixXd& pseudo_inverse() const { return pinv_; }

  /// x0 <- M^+ y + (I - M^+ M) x0, column-wise.
  Batch project(const Batch& x0) const;
  /// max over samples of ||M x0 - y||_inf.
  double residual_inf(const Batch& x0) const;

 private:
  Eigen::MatrixXd mask_;
  Vec y_;
  Eigen::MatrixXd pinv_;
  Vec particular_;  // M^+ y
  Eigen::MatrixXd null_proj_;  // I - M^+ M
};

/// Called after every outer step with (index, t', x_{t'}).
using StepObserver = std::function<void(int, double, const Batch&)>;

/// Few-step stochastic sampler: n_inf bridge steps, each denoised with n_mf mean-flow steps.
Batch stmd_sample(const ConditionalField& net, const NoiseSchedule& sched, const SamplerSpec& spec,
                  Eigen::Index batch, const StepObserver& observer = {});

/// As stmd_sample, projecting every denoised x0 onto {M x0 = y} before the bridge step.
Batch stmd_inpaint(const ConditionalField& net, const NoiseSchedule& sched, const SamplerSpec& spec,
                   const LinearObservation& obs, Eigen::Index batch);

/// Ancestral sampling with an epsilon-prediction net (posterior-variance reverse steps).
Batch ddpm_sample(const ConditionalField& eps_net, const NoiseSchedule& sched, int n_steps,
                  Eigen::Index batch, std::uint64_t seed);

/// Euler integration of z <- z - ds v(z, s) from s = 1 to 0.
Batch fm_euler_sample(const ConditionalField& v_net, int n_steps, Eigen::Index batch, std::uint64_t seed);

/// z <- z - ds u(z, s - ds, s) from s = 1 to 0.
Batch meanflow_sample(const ConditionalField& u_net, int n_steps, Eigen::Index batch, std::uint64_t seed);

/// Splits a budget of network evaluations into (n_inf, n_mf): 1 -> (1,1), 2 -> (2,1), 4 -> (2,2),
/// 8 -> (4,2); other even budgets of at least 4 use n_mf = 2, odd ones n_mf = 1.
SamplerSpec sampler_for_nfe(int nfe, std::uint64_t seed);

/// Samples with the procedure matching the training objective: STMD uses `spec` directly, the
/// baselines take spec.nfe() steps seeded with spec.seed.
Batch sample_trained(const ConditionalField& net, Objective objective, const NoiseSchedule& sched,
                     const SamplerSpec& spec, Eigen::Index batch);

}  // namespace stmd
