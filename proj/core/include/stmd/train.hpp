#pragma once

#include "stmd/common.hpp"
#include "stmd/data.hpp"
#include "stmd/network.hpp"
#include "stmd/objectives.hpp"
#include "stmd/schedule.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stmd {

enum class Objective { stmd, meanflow, cfm, ddpm };

const char* to_string(Objective objective);
Objective objective_from_string(const std::string& name);

struct TrainConfig {
  Objective objective = Objective::stmd;
  double learning_rate = 5e-4;
  int iterations = 1000;
  int batch_size = 64;
  double ema_decay = 0.9995;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0.0;  // global-norm clipping when positive
  std::uint64_t seed = 0;
  int log_every = 100;
  int checkpoint_every = 0;  // 0: final checkpoint only
  RsSamplerConfig rs;
  WeightingConfig weighting;  // mean-flow objectives only; cfm and ddpm use plain squared error

  void validate() const;
};

struct TrainState {
  MlpNet net;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::vector<double> ema;
  std::int64_t step = 0;
  Rng rng;

  /// Fresh network and optimizer state, deterministic in cfg.seed.
  static TrainState create(const NetConfig& net_cfg, const TrainConfig& cfg);
  /// Network carrying the EMA parameters (what sampling uses).
  MlpNet ema_net() const;
  bool operator==(const TrainState& other) const;
};

/// splitmix64 of (seed, stream): independent generator seeds from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct LossAndGrad {
  LossBreakdown loss;
  GradBuffer grad;
};

/// Loss and parameter gradient of the configured objective on batch x0, consuming the
/// objective's random draws from rng. The parameters are not modified.
LossAndGrad compute_loss(const MlpNet& net, const TrainConfig& cfg, const NoiseSchedule& sched,
                         const Batch& x0, Rng& rng, bool with_grad = true);

/// One optimizer step of the respective objective. Throws NumericError (state untouched)
/// on a non-finite loss or gradient.
LossBreakdown train_step_stmd(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched,
                              const Batch& x0, Rng& rng);
LossBreakdown train_step_meanflow(TrainState& state, const TrainConfig& cfg, const Batch& x0, Rng& rng);
LossBreakdown train_step_cfm(TrainState& state, const TrainConfig& cfg, const Batch& x0, Rng& rng);
LossBreakdown train_step_ddpm(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched,
                              const Batch& x0, Rng& rng);

/// Draws the data batch and all randomness from state.rng and dispatches on cfg.objective.
LossBreakdown train_step(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched,
                         const DatasetSpec& data);

/// Bias-corrected Adam; `step` counts from 1.
void adam_update(std::vector<double>& params, const GradBuffer& grad, std::vector<double>& m,
                 std::vector<double>& v, std::int64_t step, const TrainConfig& cfg);
void ema_update(std::vector<double>& ema, const std::vector<double>& params, double decay);

struct TrainHooks {
  std::function<void(const TrainState&, const LossBreakdown&)> on_log;
  std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs train_step until state.step == cfg.iterations.
void train(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched, const DatasetSpec& data,
           const TrainHooks& hooks = {});

/// Everything needed to resume training or sample from a run.
struct Checkpoint {
  NoiseSchedule schedule;
  NetConfig net;
  TrainConfig train;
  DatasetSpec dataset;
  TrainState state;
};

/// Text header (JSON) followed by little-endian float64 blobs: params, ema, adam_m, adam_v.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
/// Throws FormatError on a corrupt header, inconsistent offsets or a truncated payload.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stmd
