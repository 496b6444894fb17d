#include "run_config.hpp"

#include "stmd/eval.hpp"
#include "stmd/serialize.hpp"

#include <fstream>
#include <sstream>

namespace stmd::cli {

using nlohmann::json;

void EvalSettings::validate() const {
  if (n < 2) throw ConfigError("eval.n must be >= 2");
  if (n > kMaxAssignmentSize) throw ConfigError("eval.n must be <= " + std::to_string(kMaxAssignmentSize));
  if (replicates < 2) throw ConfigError("eval.replicates must be >= 2");
  if (nfe.empty()) throw ConfigError("eval.nfe must not be empty");
  for (int k : nfe) {
    if (k < 1) throw ConfigError("eval.nfe entries must be positive");
  }
  for (const std::string& m : metrics) {
    if (m != "w2" && m != "energy") throw ConfigError("eval.metrics: unknown metric '" + m + "' (expected w2, energy)");
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_override(json& root, const std::string& assignment, std::ostream& log) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &root;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override '" + key + "': '" + parts[i] + "' is not a section");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override '" + key + "': parent is not a section");
  json& slot = (*node)[parts.back()];
  log << "override " << key << ": " << (slot.is_null() ? std::string("<default>") : slot.dump()) << " -> "
      << value.dump() << '\n';
  slot = std::move(value);
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

EvalSettings parse_eval(const json& j) {
  const std::string where = "eval";
  require_keys(j, {"n", "replicates", "nfe", "metrics", "seed"}, where);
  EvalSettings out;
  read(j, "n", out.n, where);
  read(j, "replicates", out.replicates, where);
  read(j, "nfe", out.nfe, where);
  read(j, "metrics", out.metrics, where);
  read(j, "seed", out.seed, where);
  out.validate();
  return out;
}

}  // namespace

RunConfig parse_run_config(const json& root) {
  require_keys(root, {"dataset", "schedule", "network", "train", "sampler", "eval", "output_dir"}, "config");
  if (!root.contains("dataset")) throw ConfigError("config: the 'dataset' section is required");
  RunConfig cfg;
  from_json(root.at("dataset"), cfg.dataset);
  if (root.contains("schedule")) from_json(root.at("schedule"), cfg.schedule);
  cfg.network.dim = cfg.dataset.dim;
  if (root.contains("network")) {
    from_json(root.at("network"), cfg.network);
    if (root.at("network").contains("dim") && cfg.network.dim != cfg.dataset.dim) {
      throw ConfigError("network.dim (" + std::to_string(cfg.network.dim) + ") differs from dataset.dim (" +
                        std::to_string(cfg.dataset.dim) + ")");
    }
  }
  if (root.contains("train")) from_json(root.at("train"), cfg.train);
  if (root.contains("sampler")) from_json(root.at("sampler"), cfg.sampler);
  if (root.contains("eval")) cfg.eval = parse_eval(root.at("eval"));
  read(root, "output_dir", cfg.output_dir, "config");
  if (cfg.output_dir.empty()) throw ConfigError("config.output_dir must not be empty");
  return cfg;
}

json to_json(const EvalSettings& eval) {
  return json{{"n", eval.n},
              {"replicates", eval.replicates},
              {"nfe", eval.nfe},
              {"metrics", eval.metrics},
              {"seed", eval.seed}};
}

json to_json(const RunConfig& cfg) {
  return json{{"dataset", stmd::to_json(cfg.dataset)}, {"schedule", stmd::to_json(cfg.schedule)},
              {"network", stmd::to_json(cfg.network)}, {"train", stmd::to_json(cfg.train)},
              {"sampler", stmd::to_json(cfg.sampler)}, {"eval", to_json(cfg.eval)},
              {"output_dir", cfg.output_dir}};
}

}  // namespace stmd::cli
