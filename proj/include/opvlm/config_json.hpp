#pragma once

#include <string>

#include <json.hpp>

#include "opvlm/concept_model.hpp"
#include "opvlm/dataset.hpp"
#include "opvlm/trainer.hpp"

namespace opvlm {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

// FNV-1a64 of the canonical (key-sorted) JSON serialization, as hex.
std::string config_hash(const nlohmann::json& j);

}  // namespace opvlm
