#pragma once

// JSON views of the configuration records. Parsers start from defaults (or a
// given base), override the keys present, and reject unknown keys.

#include "json.hpp"
#include "rmra/model.hpp"
#include "rmra/signal.hpp"
#include "rmra/train.hpp"

namespace rmra {

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const SchemeSpec& spec);
/// Accepts a bare scheme name or an object with "name" plus overrides.
SchemeSpec scheme_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace rmra
