#include "stmd/serialize.hpp"

#include <string>
#include <vector>

namespace stmd {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type (" + it->dump() + ")");
  }
}

Vec read_vec(const json& j, const std::string& where) {
  std::vector<double> values;
  try {
    values = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": expected an array of numbers");
  }
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

json to_json(const NoiseSchedule& sched) {
  return json{{"beta_min", sched.beta_min}, {"beta_max", sched.beta_max}, {"kind", "linear"}};
}

void from_json(const json& j, NoiseSchedule& sched) {
  const std::string where = "schedule";
  require_keys(j, {"beta_min", "beta_max", "kind"}, where);
  read(j, "beta_min", sched.beta_min, where);
  read(j, "beta_max", sched.beta_max, where);
  std::string kind = "linear";
  read(j, "kind", kind, where);
  if (kind != "linear") throw ConfigError(where + ".kind: only 'linear' is supported");
  sched.validate();
}

json to_json(const NetConfig& cfg) {
  return json{{"dim", cfg.dim},
              {"hidden", cfg.hidden},
              {"embed_dim", cfg.embed_dim},
              {"max_frequency", cfg.max_frequency}};
}

void from_json(const json& j, NetConfig& cfg) {
  const std::string where = "network";
  require_keys(j, {"dim", "hidden", "embed_dim", "max_frequency"}, where);
  read(j, "dim", cfg.dim, where);
  read(j, "hidden", cfg.hidden, where);
  read(j, "embed_dim", cfg.embed_dim, where);
  read(j, "max_frequency", cfg.max_frequency, where);
  cfg.validate();
}

json to_json(const TrainConfig& cfg) {
  return json{{"objective", to_string(cfg.objective)},
              {"learning_rate", cfg.learning_rate},
              {"iterations", cfg.iterations},
              {"batch_size", cfg.batch_size},
              {"ema_decay", cfg.ema_decay},
              {"adam_beta1", cfg.adam_beta1},
              {"adam_beta2", cfg.adam_beta2},
              {"adam_eps", cfg.adam_eps},
              {"clip_norm", cfg.clip_norm},
              {"seed", cfg.seed},
              {"log_every", cfg.log_every},
              {"checkpoint_every", cfg.checkpoint_every},
              {"rs_sampler", {{"mu", cfg.rs.mu}, {"sigma", cfg.rs.sigma}, {"p_equal", cfg.rs.p_equal}}},
              {"weighting", {{"c", cfg.weighting.c}, {"p", cfg.weighting.p}, {"per_sample", cfg.weighting.per_sample}}}};
}

void from_json(const json& j, TrainConfig& cfg) {
  const std::string where = "train";
  require_keys(j,
               {"objective", "learning_rate", "iterations", "batch_size", "ema_decay", "adam_beta1", "adam_beta2",
                "adam_eps", "clip_norm", "seed", "log_every", "checkpoint_every", "rs_sampler", "weighting"},
               where);
  if (j.contains("objective")) {
    std::string name;
    read(j, "objective", name, where);
    cfg.objective = objective_from_string(name);
  }
  read(j, "learning_rate", cfg.learning_rate, where);
  read(j, "iterations", cfg.iterations, where);
  read(j, "batch_size", cfg.batch_size, where);
  read(j, "ema_decay", cfg.ema_decay, where);
  read(j, "adam_beta1", cfg.adam_beta1, where);
  read(j, "adam_beta2", cfg.adam_beta2, where);
  read(j, "adam_eps", cfg.adam_eps, where);
  read(j, "clip_norm", cfg.clip_norm, where);
  read(j, "seed", cfg.seed, where);
  read(j, "log_every", cfg.log_every, where);
  read(j, "checkpoint_every", cfg.checkpoint_every, where);
  if (j.contains("rs_sampler")) {
    const json& rs = j.at("rs_sampler");
    require_keys(rs, {"mu", "sigma", "p_equal"}, where + ".rs_sampler");
    read(rs, "mu", cfg.rs.mu, where + ".rs_sampler");
    read(rs, "sigma", cfg.rs.sigma, where + ".rs_sampler");
    read(rs, "p_equal", cfg.rs.p_equal, where + ".rs_sampler");
  }
  if (j.contains("weighting")) {
    const json& w = j.at("weighting");
    require_keys(w, {"c", "p", "per_sample"}, where + ".weighting");
    read(w, "c", cfg.weighting.c, where + ".weighting");
    read(w, "p", cfg.weighting.p, where + ".weighting");
    read(w, "per_sample", cfg.weighting.per_sample, where + ".weighting");
  }
  cfg.validate();
}

json to_json(const DatasetSpec& spec) {
  json j{{"kind", to_string(spec.kind)}, {"dim", spec.dim}, {"seed", spec.seed}};
  switch (spec.kind) {
    case DatasetSpec::Kind::gaussian:
      j["mean"] = vec_json(spec.mixture.means.front());
      j["scale"] = spec.mixture.scales.front();
      break;
    case DatasetSpec::Kind::gmm: {
      json comps = json::array();
      for (std::size_t k = 0; k < spec.mixture.size(); ++k) {
        comps.push_back({{"weight", spec.mixture.weights[k]},
                         {"mean", vec_json(spec.mixture.means[k])},
                         {"scale", spec.mixture.scales[k]}});
      }
      j["components"] = comps;
      break;
    }
    case DatasetSpec::Kind::two_moons:
      j["noise"] = spec.noise;
      break;
    case DatasetSpec::Kind::checkerboard:
      j["cells"] = spec.cells;
      j["half_width"] = spec.half_width;
      break;
    case DatasetSpec::Kind::csv:
      j["path"] = spec.path;
      break;
  }
  return j;
}

void from_json(const json& j, DatasetSpec& spec) {
  const std::string where = "dataset";
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::string kind = to_string(spec.kind);
  read(j, "kind", kind, where);
  const DatasetSpec::Kind k = dataset_kind_from_string(kind);
  DatasetSpec out;
  out.kind = k;
  read(j, "dim", out.dim, where);
  read(j, "seed", out.seed, where);
  switch (k) {
    case DatasetSpec::Kind::gaussian: {
      require_keys(j, {"kind", "dim", "seed", "mean", "scale"}, where);
      double scale = 1.0;
      read(j, "scale", scale, where);
      Vec mean = Vec::Zero(out.dim);
      if (j.contains("mean")) mean = read_vec(j.at("mean"), where + ".mean");
      if (!j.contains("dim")) out.dim = static_cast<int>(mean.size());
      out.mixture = IsoGmm::gaussian(mean, scale);
      break;
    }
    case DatasetSpec::Kind::gmm: {
      require_keys(j, {"kind", "dim", "seed", "components", "ring"}, where);
      if (j.contains("components") == j.contains("ring")) {
        throw ConfigError(where + ": gmm needs exactly one of 'components' or 'ring'");
      }
      if (j.contains("ring")) {
        const json& r = j.at("ring");
        require_keys(r, {"count", "radius", "scale"}, where + ".ring");
        int count = 8;
        double radius = 2.0;
        double scale = 0.2;
        read(r, "count", count, where + ".ring");
        read(r, "radius", radius, where + ".ring");
        read(r, "scale", scale, where + ".ring");
        if (count < 1) throw ConfigError(where + ".ring.count must be positive");
        out.mixture = IsoGmm::ring(count, radius, scale);
      } else {
        const json& comps = j.at("components");
        if (!comps.is_array() || comps.empty()) throw ConfigError(where + ".components: expected a non-empty array");
        for (const json& c : comps) {
          require_keys(c, {"weight", "mean", "scale"}, where + ".components");
          if (!c.contains("mean")) throw ConfigError(where + ".components: 'mean' is required");
          double weight = 1.0 / static_cast<double>(comps.size());
          double scale = 1.0;
          read(c, "weight", weight, where + ".components");
          read(c, "scale", scale, where + ".components");
          out.mixture.weights.push_back(weight);
          out.mixture.means.push_back(read_vec(c.at("mean"), where + ".components.mean"));
          out.mixture.scales.push_back(scale);
        }
      }
      if (!j.contains("dim")) out.dim = static_cast<int>(out.mixture.dim());
      break;
    }
    case DatasetSpec::Kind::two_moons:
      require_keys(j, {"kind", "dim", "seed", "noise"}, where);
      read(j, "noise", out.noise, where);
      break;
    case DatasetSpec::Kind::checkerboard:
      require_keys(j, {"kind", "dim", "seed", "cells", "half_width"}, where);
      read(j, "cells", out.cells, where);
      read(j, "half_width", out.half_width, where);
      break;
    case DatasetSpec::Kind::csv:
      require_keys(j, {"kind", "dim", "seed", "path"}, where);
      read(j, "path", out.path, where);
      break;
  }
  out.validate();
  spec = std::move(out);
}

json to_json(const SamplerSpec& spec) {
  return json{{"n_inf", spec.n_inf}, {"n_mf", spec.n_mf}, {"seed", spec.seed}};
}

void from_json(const json& j, SamplerSpec& spec) {
  const std::string where = "sampler";
  require_keys(j, {"n_inf", "n_mf", "seed"}, where);
  read(j, "n_inf", spec.n_inf, where);
  read(j, "n_mf", spec.n_mf, where);
  read(j, "seed", spec.seed, where);
  spec.validate();
}

}  // namespace stmd
