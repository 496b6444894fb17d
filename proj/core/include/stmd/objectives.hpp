#pragma once

#include "stmd/common.hpp"
#include "stmd/network.hpp"

#include <utility>

namespace stmd {

/// Logit-normal sampler for the mean-flow interval (r, s).
struct RsSamplerConfig {
  double mu = -0.4;
  double sigma = 1.0;
  double p_equal = 0.25;  // probability that r = s

  void validate() const;
};

/// Adaptive loss weight sg(w) = (||delta||^2 + c)^-p.
struct WeightingConfig {
  double c = 0.01;
  double p = 1.0;
  bool per_sample = false;  // default: one weight from the batch mean of ||delta||^2

  void validate() const;
};

struct LossBreakdown {
  double weighted_loss = 0.0;
  double raw_loss = 0.0;       // mean over the batch of ||delta||^2
  double mean_delta_sq = 0.0;  // the quantity the batch weight is computed from
  double grad_norm = 0.0;      // filled in by the trainer
  Vec per_sample;              // ||delta_i||^2
};

/// Draws 0 <= r <= s <= 1.
std::pair<double, double> sample_rs(Rng& rng, const RsSamplerConfig& cfg);

double adaptive_weight(double delta_sq, double c, double p);

/// v_pred - (z1 - z0).
Batch cfm_residual(const Batch& v_pred, const Batch& z0, const Batch& z1);

struct MeanFlowResidual {
  Batch delta;   // u - target
  Batch target;  // treated as a constant in gradients
  Batch u;
  Batch du;
};

/// Unconditional mean-flow residual: (u, du) = jvp(u, (z_s, r, s, 0, 0), (z1 - z0, 0, 1, 0, 0)),
/// target = (z1 - z0) - (s - r) du.
MeanFlowResidual mf_target_and_residual(const ConditionalField& net, const Batch& z_s, const Vec& r,
                                        const Vec& s, const Batch& z0, const Batch& z1);

/// Conditional (diffusion) mean-flow residual with tangents (z1 - x0, 0, 1, 0, 0) and
/// target (z1 - x0) - (s - r) du.
MeanFlowResidual dcmf_target_and_residual(const ConditionalField& net, const Batch& z_s,
                                          const Vec& r, const Vec& s, const Batch& x_t,
                                          const Vec& t, const Batch& x0, const Batch& z1);

/// Assembles sg(w) * mean ||delta||^2 and returns d(weighted_loss)/d(prediction) in `upstream`.
/// Throws NumericError on a non-finite residual.
LossBreakdown weighted_loss(const Batch& delta, const WeightingConfig& cfg, Batch* upstream);

/// Input conventions for the baselines.
/// Flow-matching velocity v(z, s): r = s, no conditioning.
FieldInput velocity_input(Batch z, const Vec& s);
/// DDPM noise predictor eps(x_t, t): z = x_t, r = s = 0, x = 0, t = t.
FieldInput epsilon_input(Batch x_t, const Vec& t);

}  // namespace stmd
