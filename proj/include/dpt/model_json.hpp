#pragma once

#include <json.hpp>

#include "dpt/model.hpp"

// JSON (de)serialization of the model configuration, shared by run-config
// parsing and checkpoint manifests.
namespace dpt {

void to_json(nlohmann::json& j, const StageSpec& s);
void from_json(const nlohmann::json& j, StageSpec& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace dpt
