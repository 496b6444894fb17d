#pragma once

#include "stmd/data.hpp"
#include "stmd/network.hpp"
#include "stmd/sample.hpp"
#include "stmd/schedule.hpp"
#include "stmd/train.hpp"

#include <nlohmann/json.hpp>

#include <ostream>
#include <string>
#include <vector>

namespace stmd::cli {

struct EvalSettings {
  Eigen::Index n = 2048;
  int replicates = 4;
  std::vector<int> nfe{1, 2, 4, 8};
  std::vector<std::string> metrics{"w2", "energy"};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Everything a run needs, parsed from one JSON document.
struct RunConfig {
  DatasetSpec dataset;
  NoiseSchedule schedule;
  NetConfig network;
  TrainConfig train;
  SamplerSpec sampler;
  EvalSettings eval;
  std::string output_dir = "stmd_run";
};

/// Reads a JSON file; ConfigError on unreadable or malformed input.
nlohmann::json load_json_file(const std::string& path);

/// Applies "a.b.c=value" to `root`. The value is parsed as JSON when possible and taken as a
/// string otherwise. The change is described on `log`.
void apply_override(nlohmann::json& root, const std::string& assignment, std::ostream& log);

/// Validates the whole document before returning; ConfigError names the offending key.
RunConfig parse_run_config(const nlohmann::json& root);
nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const EvalSettings& eval);

}  // namespace stmd::cli
