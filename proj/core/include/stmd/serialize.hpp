#pragma once

#include "stmd/data.hpp"
#include "stmd/network.hpp"
#include "stmd/sample.hpp"
#include "stmd/schedule.hpp"
#include "stmd/train.hpp"

#include <nlohmann/json.hpp>

namespace stmd {

// JSON views of the configuration types. Parsing starts from the defaults, accepts any
// subset of keys and throws ConfigError on unknown keys or wrong value types.

nlohmann::json to_json(const NoiseSchedule& sched);
nlohmann::json to_json(const NetConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const DatasetSpec& spec);
nlohmann::json to_json(const SamplerSpec& spec);

void from_json(const nlohmann::json& j, NoiseSchedule& sched);
void from_json(const nlohmann::json& j, NetConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);
void from_json(const nlohmann::json& j, DatasetSpec& spec);
void from_json(const nlohmann::json& j, SamplerSpec& spec);

/// Rejects keys of `j` outside `allowed`; `where` names the section in the message.
void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where);

}  // namespace stmd
