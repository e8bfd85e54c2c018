#pragma once

// JSON forms of the configuration structs. Missing keys keep defaults;
// unknown keys are rejected.

#include <json.hpp>

#include "schyena/data.hpp"
#include "schyena/model.hpp"
#include "schyena/training.hpp"

namespace schyena {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

std::string task_name(Task task);
Task parse_task(const std::string& name);

}  // namespace schyena
