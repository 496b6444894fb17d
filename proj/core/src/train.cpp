#include "stmd/train.hpp"

#include "stmd/serialize.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stmd {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::stmd:
      return "stmd";
    case Objective::meanflow:
      return "meanflow";
    case Objective::cfm:
      return "cfm";
    case Objective::ddpm:
      return "ddpm";
  }
  return "unknown";
}

Objective objective_from_string(const std::string& name) {
  if (name == "stmd") return Objective::stmd;
  if (name == "meanflow") return Objective::meanflow;
  if (name == "cfm") return Objective::cfm;
  if (name == "ddpm") return Objective::ddpm;
  throw ConfigError("unknown objective '" + name + "' (expected stmd, meanflow, cfm or ddpm)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (iterations < 1) throw ConfigError("train: iterations must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train: ema_decay must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train: adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train: adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be nonnegative");
  if (log_every < 1) throw ConfigError("train: log_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be nonnegative");
  rs.validate();
  weighting.validate();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrainState TrainState::create(const NetConfig& net_cfg, const TrainConfig& cfg) {
  net_cfg.validate();
  TrainState state;
  state.net = MlpNet::init(net_cfg, derive_seed(cfg.seed, 0));
  state.adam_m.assign(state.net.num_params(), 0.0);
  state.adam_v.assign(state.net.num_params(), 0.0);
  state.ema = state.net.params();
  state.rng.seed(derive_seed(cfg.seed, 1));
  return state;
}

MlpNet TrainState::ema_net() const { return MlpNet::from_params(net.config(), ema); }

bool TrainState::operator==(const TrainState& other) const {
  return net.params() == other.net.params() && adam_m == other.adam_m && adam_v == other.adam_v &&
         ema == other.ema && step == other.step && rng == other.rng;
}

namespace {

Vec draw_uniform(Rng& rng, Eigen::Index n) { return uniform_vec(rng, n); }

LossAndGrad mean_flow_loss(const MlpNet& net, const TrainConfig& cfg, const FieldInput& in, const Batch& velocity,
                           bool with_grad) {
  const Vec gap = in.s - in.r;
  ForwardCache cache;
  const JvpResult jr = net.jvp_cached(in, FieldTangent::along_s(velocity), cache);
  const Batch target = velocity - jr.du * gap.asDiagonal();
  const Batch delta = jr.u - target;
  LossAndGrad out;
  Batch upstream;
  out.loss = weighted_loss(delta, cfg.weighting, with_grad ? &upstream : nullptr);
  if (with_grad) out.grad = net.backward(cache, upstream);
  return out;
}

LossAndGrad regression_loss(const MlpNet& net, const FieldInput& in, const Batch& target, bool with_grad) {
  const ForwardCache cache = net.forward_cached(in);
  const Batch delta = cache.activations.back() - target;
  WeightingConfig plain;
  plain.p = 0.0;
  LossAndGrad out;
  Batch upstream;
  out.loss = weighted_loss(delta, plain, with_grad ? &upstream : nullptr);
  if (with_grad) out.grad = net.backward(cache, upstream);
  return out;
}

void draw_rs(Rng& rng, const RsSamplerConfig& rs, Vec& r, Vec& s) {
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    const auto [a, b] = sample_rs(rng, rs);
    r(j) = a;
    s(j) = b;
  }
}

}  // namespace

LossAndGrad compute_loss(const MlpNet& net, const TrainConfig& cfg, const NoiseSchedule& sched, const Batch& x0,
                         Rng& rng, bool with_grad) {
  require_shape(x0.rows() == net.dim(), "compute_loss: batch dimension differs from the network");
  require_shape(x0.cols() >= 1, "compute_loss: empty batch");
  const Eigen::Index d = x0.rows();
  const Eigen::Index n = x0.cols();
  switch (cfg.objective) {
    case Objective::stmd: {
      const Vec t = draw_uniform(rng, n);
      const Batch xt = perturb(sched, x0, t, standard_normal(rng, d, n));
      const Batch z1 = standard_normal(rng, d, n);
      Vec r(n), s(n);
      draw_rs(rng, cfg.rs, r, s);
      const Batch zs = x0 * (1.0 - s.array()).matrix().asDiagonal() + z1 * s.asDiagonal();
      return mean_flow_loss(net, cfg, FieldInput::conditional(zs, r, s, xt, t), z1 - x0, with_grad);
    }
    case Objective::meanflow: {
      const Batch z1 = standard_normal(rng, d, n);
      Vec r(n), s(n);
      draw_rs(rng, cfg.rs, r, s);
      const Batch zs = x0 * (1.0 - s.array()).matrix().asDiagonal() + z1 * s.asDiagonal();
      return mean_flow_loss(net, cfg, FieldInput::unconditional(zs, r, s), z1 - x0, with_grad);
    }
    case Objective::cfm: {
      const Batch z1 = standard_normal(rng, d, n);
      const Vec s = draw_uniform(rng, n);
      const Batch zs = x0 * (1.0 - s.array()).matrix().asDiagonal() + z1 * s.asDiagonal();
      return regression_loss(net, velocity_input(zs, s), z1 - x0, with_grad);
    }
    case Objective::ddpm: {
      const Vec t = draw_uniform(rng, n);
      const Batch eps = standard_normal(rng, d, n);
      const Batch xt = perturb(sched, x0, t, eps);
      return regression_loss(net, epsilon_input(xt, t), eps, with_grad);
    }
  }
  throw ConfigError("compute_loss: unknown objective");
}

void adam_update(std::vector<double>& params, const GradBuffer& grad, std::vector<double>& m, std::vector<double>& v,
                 std::int64_t step, const TrainConfig& cfg) {
  require_shape(grad.values.size() == params.size() && m.size() == params.size() && v.size() == params.size(),
                "adam_update: buffer sizes differ");
  if (step < 1) throw DomainError("adam_update: step counts from 1");
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.values[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

void ema_update(std::vector<double>& ema, const std::vector<double>& params, double decay) {
  require_shape(ema.size() == params.size(), "ema_update: buffer sizes differ");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = decay * ema[i] + (1.0 - decay) * params[i];
}

namespace {

LossBreakdown apply_step(TrainState& state, const TrainConfig& cfg, LossAndGrad lg) {
  double norm = lg.grad.norm();
  lg.loss.grad_norm = norm;
  if (!std::isfinite(lg.loss.weighted_loss) || !std::isfinite(lg.loss.raw_loss) || !std::isfinite(norm)) {
    std::ostringstream os;
    os << "non-finite loss at step " << state.step << ": raw_loss=" << lg.loss.raw_loss
       << " weighted_loss=" << lg.loss.weighted_loss << " grad_norm=" << norm;
    throw NumericError(os.str());
  }
  if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) lg.grad *= cfg.clip_norm / norm;
  ++state.step;
  adam_update(state.net.mutable_params(), lg.grad, state.adam_m, state.adam_v, state.step, cfg);
  ema_update(state.ema, state.net.params(), cfg.ema_decay);
  return lg.loss;
}

LossBreakdown step_with(TrainState& state, TrainConfig cfg, Objective objective, const NoiseSchedule& sched,
                        const Batch& x0, Rng& rng) {
  cfg.objective = objective;
  LossAndGrad lg;
  try {
    lg = compute_loss(state.net, cfg, sched, x0, rng);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(state.step) + ": " + e.what());
  }
  return apply_step(state, cfg, std::move(lg));
}

}  // namespace

LossBreakdown train_step_stmd(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched,
                              const Batch& x0, Rng& rng) {
  return step_with(state, cfg, Objective::stmd, sched, x0, rng);
}

LossBreakdown train_step_meanflow(TrainState& state, const TrainConfig& cfg, const Batch& x0, Rng& rng) {
  return step_with(state, cfg, Objective::meanflow, NoiseSchedule{}, x0, rng);
}

LossBreakdown train_step_cfm(TrainState& state, const TrainConfig& cfg, const Batch& x0, Rng& rng) {
  return step_with(state, cfg, Objective::cfm, NoiseSchedule{}, x0, rng);
}

LossBreakdown train_step_ddpm(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched,
                              const Batch& x0, Rng& rng) {
  return step_with(state, cfg, Objective::ddpm, sched, x0, rng);
}

LossBreakdown train_step(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched,
                         const DatasetSpec& data) {
  const Batch x0 = sample_dataset(data, cfg.batch_size, state.rng);
  return step_with(state, cfg, cfg.objective, sched, x0, state.rng);
}

void train(TrainState& state, const TrainConfig& cfg, const NoiseSchedule& sched, const DatasetSpec& data,
           const TrainHooks& hooks) {
  cfg.validate();
  sched.validate();
  data.validate();
  require_shape(data.dim == state.net.dim(), "train: dataset and network dimensions differ");
  while (state.step < cfg.iterations) {
    const LossBreakdown loss = train_step(state, cfg, sched, data);
    if (hooks.on_log && state.step % cfg.log_every == 0) hooks.on_log(state, loss);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step < cfg.iterations) {
      hooks.on_checkpoint(state);
    }
  }
}

namespace {

constexpr const char* kMagic = "STMD-CHECKPOINT 1";

const char* const kBlobNames[] = {"params", "ema", "adam_m", "adam_v"};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const TrainState& st = ck.state;
  const std::vector<double>* blobs[] = {&st.net.params(), &st.ema, &st.adam_m, &st.adam_v};
  nlohmann::json header;
  header["schedule"] = to_json(ck.schedule);
  header["network"] = to_json(ck.net);
  header["train"] = to_json(ck.train);
  header["dataset"] = to_json(ck.dataset);
  header["step"] = st.step;
  std::ostringstream rng_text;
  rng_text << st.rng;
  header["rng"] = rng_text.str();
  std::size_t offset = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    header["blobs"][kBlobNames[b]] = {{"offset", offset}, {"count", blobs[b]->size()}};
    offset += blobs[b]->size() * sizeof(double);
  }
  header["payload_bytes"] = offset;
  const std::string text = header.dump(1);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("save_checkpoint: cannot open " + path);
  out << kMagic << '\n' << text.size() << '\n' << text;
  for (const auto* blob : blobs) {
    out.write(reinterpret_cast<const char*>(blob->data()), static_cast<std::streamsize>(blob->size() * sizeof(double)));
  }
  if (!out) throw FormatError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw FormatError("load_checkpoint: bad magic in " + path);
  std::string size_line;
  std::getline(in, size_line);
  std::size_t header_size = 0;
  try {
    std::size_t used = 0;
    header_size = std::stoull(size_line, &used);
    if (used != size_line.size()) throw FormatError("trailing characters");
  } catch (const std::exception&) {
    throw FormatError("load_checkpoint: bad header length in " + path);
  }
  if (header_size > (std::size_t{1} << 26)) throw FormatError("load_checkpoint: header too large");
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (static_cast<std::size_t>(in.gcount()) != header_size) throw FormatError("load_checkpoint: truncated header");

  Checkpoint ck;
  std::vector<double> blobs[4];
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    require_keys(header, {"schedule", "network", "train", "dataset", "step", "rng", "blobs", "payload_bytes"},
                 "checkpoint");
    from_json(header.at("schedule"), ck.schedule);
    from_json(header.at("network"), ck.net);
    from_json(header.at("train"), ck.train);
    from_json(header.at("dataset"), ck.dataset);
    ck.state.step = header.at("step").get<std::int64_t>();
    if (ck.state.step < 0) throw FormatError("negative step");
    std::istringstream rng_text(header.at("rng").get<std::string>());
    rng_text >> ck.state.rng;
    if (!rng_text) throw FormatError("unreadable rng state");

    const std::size_t payload = header.at("payload_bytes").get<std::size_t>();
    std::vector<char> bytes(payload);
    in.read(bytes.data(), static_cast<std::streamsize>(payload));
    if (static_cast<std::size_t>(in.gcount()) != payload) throw FormatError("truncated payload");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload");

    const MlpNet shape = MlpNet::init(ck.net, 0);
    for (std::size_t b = 0; b < 4; ++b) {
      const nlohmann::json& info = header.at("blobs").at(kBlobNames[b]);
      const auto offset = info.at("offset").get<std::size_t>();
      const auto count = info.at("count").get<std::size_t>();
      if (count != shape.num_params()) throw FormatError(std::string("blob size mismatch for ") + kBlobNames[b]);
      if (offset % sizeof(double) != 0 || offset > payload || count * sizeof(double) > payload - offset) {
        throw FormatError(std::string("blob out of range: ") + kBlobNames[b]);
      }
      blobs[b].resize(count);
      std::memcpy(blobs[b].data(), bytes.data() + offset, count * sizeof(double));
    }
  } catch (const FormatError& e) {
    throw FormatError("load_checkpoint: " + std::string(e.what()) + " in " + path);
  } catch (const ConfigError& e) {
    throw FormatError("load_checkpoint: invalid header (" + std::string(e.what()) + ") in " + path);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_checkpoint: malformed header (" + std::string(e.what()) + ") in " + path);
  }
  ck.state.net = MlpNet::from_params(ck.net, std::move(blobs[0]));
  ck.state.ema = std::move(blobs[1]);
  ck.state.adam_m = std::move(blobs[2]);
  ck.state.adam_v = std::move(blobs[3]);
  return ck;
}

}  // namespace stmd
