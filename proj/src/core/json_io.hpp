#pragma once

#include <json.hpp>

#include "bridgestain/checkpoint.hpp"
#include "bridgestain/image.hpp"
#include "bridgestain/nn/unet.hpp"

namespace bridgestain {

using nlohmann::json;

json to_json_value(const nn::UNetConfig& c);
json to_json_value(const nn::ConditionerConfig& c);
json to_json_value(const ModelSpec& s);
json to_json_value(const NormalizationStats& s);

nn::UNetConfig unet_config_from(const json& j, nn::UNetConfig base = {});
nn::ConditionerConfig conditioner_config_from(const json& j, nn::ConditionerConfig base = {});
ModelSpec model_spec_from(const json& j);
NormalizationStats stats_from(const json& j);

}  // namespace bridgestain
